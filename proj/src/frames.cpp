#include "datorus/frames.hpp"

#include <cmath>
#include <mutex>

#include "datorus/parallel.hpp"

namespace datorus {

namespace {

struct OrbitFrames {
  Mat3 frame;      // at the anchor point
  Mat3 frame_next; // at f(anchor)
};

// Transport-converged frames at x (and at f(x)) using forward and backward
// orbit segments of length `iters`.
OrbitFrames converge_frames(const DAMap& f, const Vec3& x, int iters) {
  const Mat3& F0 = f.spectral.frame;
  const Mat3& D0 = f.spectral.dual_frame;

  std::vector<Vec3> fwd(static_cast<std::size_t>(iters) + 2);
  fwd[0] = x;
  for (int k = 0; k <= iters; ++k)
    fwd[k + 1] = f.eval(TorusPoint(fwd[k])).coords;
  std::vector<Vec3> bwd(static_cast<std::size_t>(iters) + 1);
  bwd[0] = x;
  for (int k = 0; k < iters; ++k)
    bwd[k + 1] = f.inverse(TorusPoint(bwd[k])).coords;

  auto orient = [](Vec3 v, const Vec3& ref) {
    if (v.dot(ref) < 0) v = -v;
    return v;
  };

  // unstable direction: push e3 forward from the deep backward point
  Vec3 vu = F0.col(2);
  for (int k = iters; k >= 1; --k) vu = (f.diff(bwd[k]) * vu).normalized();
  Vec3 vu_next = (f.diff(bwd[0]) * vu).normalized();

  // stable direction: pull e1 back from the deep forward point
  Vec3 vs_next = F0.col(0);
  for (int k = iters; k >= 2; --k)
    vs_next = f.diff(fwd[k - 1]).partialPivLu().solve(vs_next).normalized();
  Vec3 vs = f.diff(fwd[0]).partialPivLu().solve(vs_next).normalized();

  // cu plane: forward transport of its normal (dual row 1)
  Vec3 ncu = D0.row(0).transpose();
  for (int k = iters; k >= 1; --k) {
    ncu = f.diff(bwd[k]).transpose().partialPivLu().solve(ncu).normalized();
  }
  Vec3 ncu_next = f.diff(bwd[0]).transpose().partialPivLu().solve(ncu).normalized();

  // cs plane: backward transport of its normal (dual row 3)
  Vec3 ncs_next = D0.row(2).transpose();
  for (int k = iters; k >= 2; --k)
    ncs_next = (f.diff(fwd[k - 1]).transpose() * ncs_next).normalized();
  Vec3 ncs = (f.diff(fwd[0]).transpose() * ncs_next).normalized();

  Vec3 vc = orient(ncu.cross(ncs).normalized(), F0.col(1));
  Vec3 vc_next = orient(ncu_next.cross(ncs_next).normalized(), F0.col(1));

  OrbitFrames out;
  out.frame.col(0) = orient(vs, F0.col(0));
  out.frame.col(1) = vc;
  out.frame.col(2) = orient(vu, F0.col(2));
  out.frame_next.col(0) = orient(vs_next, F0.col(0));
  out.frame_next.col(1) = vc_next;
  out.frame_next.col(2) = orient(vu_next, F0.col(2));
  return out;
}

}  // namespace

Mat3 frames_at_point(const DAMap& f, const Vec3& x, int iters) {
  return converge_frames(f, x, iters).frame;
}

Mat3 FrameField::frame_at(const Vec3& x) const {
  const int n = grid_n_;
  Vec3 g = x * n;
  int i0[3], i1[3];
  double w[3];
  for (int d = 0; d < 3; ++d) {
    double fl = std::floor(g[d]);
    w[d] = g[d] - fl;
    int base = static_cast<int>(fl) % n;
    if (base < 0) base += n;
    i0[d] = base;
    i1[d] = (base + 1) % n;
  }
  Mat3 acc = Mat3::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        double wt = (a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) *
                    (c ? w[2] : 1 - w[2]);
        acc += wt * frames_[index(a ? i1[0] : i0[0], b ? i1[1] : i0[1],
                                  c ? i1[2] : i0[2])];
      }
  for (int c = 0; c < 3; ++c) acc.col(c).normalize();
  return acc;
}

FrameField compute_frames(const DAMap& f, int grid_n, int iters) {
  FrameField ff(grid_n, iters);
  const std::size_t total = static_cast<std::size_t>(grid_n) * grid_n * grid_n;
  parallel_chunks(total, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int ix = static_cast<int>(idx % grid_n);
      int iy = static_cast<int>((idx / grid_n) % grid_n);
      int iz = static_cast<int>(idx / (static_cast<std::size_t>(grid_n) * grid_n));
      Vec3 x(static_cast<double>(ix) / grid_n, static_cast<double>(iy) / grid_n,
             static_cast<double>(iz) / grid_n);
      ff.frames_[idx] = converge_frames(f, x, iters).frame;
    }
  });

  // invariance defects: against interpolated frames on a node sample, and
  // against freshly converged frames (truncation-only) on a smaller one
  double worst_interp = 0.0, worst_trunc = 0.0;
  std::mutex mu;
  std::size_t stride = std::max<std::size_t>(std::size_t{1}, total / 4096);
  std::vector<std::size_t> sample;
  for (std::size_t idx = 0; idx < total; idx += stride) sample.push_back(idx);
  parallel_chunks(sample.size(), 16, [&](std::size_t lo, std::size_t hi) {
    double wi = 0.0, wt = 0.0;
    for (std::size_t si = lo; si < hi; ++si) {
      std::size_t idx = sample[si];
      int ix = static_cast<int>(idx % grid_n);
      int iy = static_cast<int>((idx / grid_n) % grid_n);
      int iz = static_cast<int>(idx / (static_cast<std::size_t>(grid_n) * grid_n));
      Vec3 x(static_cast<double>(ix) / grid_n, static_cast<double>(iy) / grid_n,
             static_cast<double>(iz) / grid_n);
      Mat3 d = f.diff(x);
      Vec3 fx = f.eval(TorusPoint(x)).coords;
      Mat3 interp = ff.frame_at(fx);
      for (int c = 0; c < 3; ++c) {
        Vec3 im = (d * ff.frames_[idx].col(c)).normalized();
        wi = std::max(wi, angle_between(im, interp.col(c)));
      }
      if (si % 16 == 0) {
        Mat3 fresh = converge_frames(f, fx, iters).frame;
        for (int c = 0; c < 3; ++c) {
          Vec3 im = (d * ff.frames_[idx].col(c)).normalized();
          wt = std::max(wt, angle_between(im, fresh.col(c)));
        }
      }
    }
    std::lock_guard<std::mutex> lk(mu);
    worst_interp = std::max(worst_interp, wi);
    worst_trunc = std::max(worst_trunc, wt);
  });
  ff.residual_interp = worst_interp;
  ff.residual_truncation = worst_trunc;
  if (!(worst_trunc < 1e-5))
    throw NoConvergence("frame transport defect " + std::to_string(worst_trunc) +
                        " after " + std::to_string(iters) + " iterations");
  return ff;
}

PartialHyperbolicityReport verify_partial_hyperbolicity(const DAMap& f, int grid_n,
                                                        double cone_angle,
                                                        int iterations) {
  if (grid_n < 16) throw std::invalid_argument("grid_n must be >= 16");
  PartialHyperbolicityReport rep;
  rep.grid_resolution = grid_n;

  const Mat3& F0 = f.spectral.frame;
  const std::size_t total = static_cast<std::size_t>(grid_n) * grid_n * grid_n;

  struct CellData {
    Vec3 rates;        // log rates s, c, u at the midpoint
    std::array<double, 3> angles;
    bool ok_order;
  };

  std::vector<double> lmin(3, 1e300), lmax(3, -1e300);
  std::array<double, 3> worst_angle{0, 0, 0};
  bool ok = true;
  Vec3i bad_cell(-1, -1, -1);
  std::string why;
  std::mutex mu;

  parallel_chunks(total, 128, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> lmin_l(3, 1e300), lmax_l(3, -1e300);
    std::array<double, 3> wa{0, 0, 0};
    bool ok_l = true;
    Vec3i bad_l(-1, -1, -1);
    std::string why_l;
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int ix = static_cast<int>(idx % grid_n);
      int iy = static_cast<int>((idx / grid_n) % grid_n);
      int iz = static_cast<int>(idx / (static_cast<std::size_t>(grid_n) * grid_n));
      Vec3 x0((ix + 0.5) / grid_n, (iy + 0.5) / grid_n, (iz + 0.5) / grid_n);
      OrbitFrames of = converge_frames(f, x0, iterations);
      Mat3 Fa = of.frame, Fb = of.frame_next;
      Mat3 d = f.diff(x0);
      Mat3 coeff = Fb.partialPivLu().solve(d * Fa);
      Vec3 rates(std::log(coeff.col(0).norm()), std::log(coeff.col(1).norm()),
                 std::log(coeff.col(2).norm()));
      for (int c = 0; c < 3; ++c) {
        lmin_l[c] = std::min(lmin_l[c], rates[c]);
        lmax_l[c] = std::max(lmax_l[c], rates[c]);
        double ang = angle_between(Fa.col(c), F0.col(c));
        wa[c] = std::max(wa[c], ang);
      }
      if (ok_l) {
        if (!(rates[0] < rates[1] && rates[1] < rates[2])) {
          ok_l = false;
          bad_l = Vec3i(ix, iy, iz);
          why_l = "rate ordering violated";
        } else {
          for (int c = 0; c < 3; ++c)
            if (wa[c] > cone_angle) {
              ok_l = false;
              bad_l = Vec3i(ix, iy, iz);
              why_l = "frame left the cone around the linear splitting";
              break;
            }
        }
      }
    }
    std::lock_guard<std::mutex> lk(mu);
    for (int c = 0; c < 3; ++c) {
      lmin[c] = std::min(lmin[c], lmin_l[c]);
      lmax[c] = std::max(lmax[c], lmax_l[c]);
      worst_angle[c] = std::max(worst_angle[c], wa[c]);
    }
    if (!ok_l && ok) {
      ok = false;
      bad_cell = bad_l;
      why = why_l;
    }
  });

  rep.lambda = {lmin[0], lmax[0], lmin[1], lmax[1], lmin[2], lmax[2]};
  rep.lambda5_min = lmin[2];
  rep.lambda5_max = lmax[2];
  rep.cone_angles = worst_angle;
  if (ok) {
    if (!(lmax[1] < 0.0)) {
      ok = false;
      why = "center family not uniformly contracting (lambda4 >= 0)";
    } else if (!(lmin[2] > 0.0)) {
      ok = false;
      why = "unstable family not uniformly expanding (lambda5 <= 0)";
    }
  }
  rep.verified = ok;
  rep.violation_cell = bad_cell;
  rep.violation = why;
  return rep;
}

Vec3 family_rates(const FrameField& ff, const DAMap& f, const Vec3& x) {
  Mat3 Fa = ff.frame_at(x);
  Vec3 fx = f.eval(TorusPoint(x)).coords;
  Mat3 Fb = ff.frame_at(fx);
  Mat3 coeff = Fb.partialPivLu().solve(f.diff(x) * Fa);
  return Vec3(coeff.col(0).norm(), coeff.col(1).norm(), coeff.col(2).norm());
}

double center_rate(const FrameField& ff, const DAMap& f, const Vec3& x) {
  Mat3 Fa = ff.frame_at(x);
  Vec3 fx = f.eval(TorusPoint(x)).coords;
  Mat3 Fb = ff.frame_at(fx);
  return Fb.partialPivLu().solve(f.diff(x) * Fa.col(1)).norm();
}

std::pair<double, double> cs_vs_c_norm(const FrameField& ff, const DAMap& f,
                                       const Vec3& x, int n) {
  // accumulate df^n on the (s,c) pair, coefficients in the adapted metric
  Vec3 vs = ff.frame_at(x).col(0);
  Vec3 vc = ff.frame_at(x).col(1);
  Vec3 y = x;
  Mat3 acc_cols;
  acc_cols.col(0) = vs;
  acc_cols.col(1) = vc;
  for (int k = 0; k < n; ++k) {
    Mat3 d = f.diff(y);
    acc_cols.col(0) = d * acc_cols.col(0);
    acc_cols.col(1) = d * acc_cols.col(1);
    y = f.eval(TorusPoint(y)).coords;
  }
  Mat3 Fend = ff.frame_at(y);
  Eigen::Matrix<double, 3, 2> coeff;
  coeff.col(0) = Fend.partialPivLu().solve(acc_cols.col(0));
  coeff.col(1) = Fend.partialPivLu().solve(acc_cols.col(1));
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(coeff);
  double cs_norm = svd.singularValues()(0);
  double c_norm = coeff.col(1).norm();
  return {cs_norm, c_norm};
}

}  // namespace datorus
