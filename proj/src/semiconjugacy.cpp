#include "datorus/semiconjugacy.hpp"

#include <cmath>
#include <mutex>

#include "datorus/parallel.hpp"
#include "datorus/rng.hpp"

namespace datorus {

namespace {

// u at one point by truncated orbit sums in the eigenbasis:
//   u_i(x) = -sum_{k>=1} mu_i^{k-1} p_i(f^{-k} x)   (contracting i = 1, 2)
//   u_3(x) =  sum_{k>=0} mu_3^{-(k+1)} p_3(f^k x)
Vec3 series_eval(const DAMap& f, const Vec3& x, int depth) {
  if (f.amplitude == 0.0) return Vec3::Zero();
  const Mat3& dual = f.spectral.dual_frame;
  const Vec3& mu = f.spectral.mu;

  Vec3 c = Vec3::Zero();
  TorusPoint y(torus_reduce(x));
  double w1 = 1.0, w2 = 1.0;
  for (int k = 1; k <= depth; ++k) {
    y = f.inverse(y);
    Vec3 p = f.perturbation(y.coords);
    if (p != Vec3::Zero()) {
      Vec3 pc = dual * p;
      c[0] -= w1 * pc[0];
      c[1] -= w2 * pc[1];
    }
    w1 *= mu[0];
    w2 *= mu[1];
    if (std::abs(w1) < 1e-18 && std::abs(w2) < 1e-18) break;
  }

  // expanding component; vanishes identically for center-directed bumps but
  // kept for general perturbations
  TorusPoint z(torus_reduce(x));
  double w3 = 1.0 / mu[2];
  for (int k = 0; k <= depth; ++k) {
    Vec3 p = f.perturbation(z.coords);
    if (p != Vec3::Zero()) c[2] += w3 * (dual.row(2) * p)(0);
    if (std::abs(w3) < 1e-18) break;
    z = f.eval(z);
    w3 /= mu[2];
  }
  return f.spectral.frame * c;
}

Vec3 test_point(int i, int j, int k, int n) {
  return Vec3((i + 0.372) / n, (j + 0.415) / n, (k + 0.437) / n);
}

}  // namespace

void DisplacementField::assign_grid(const DAMap& f, int grid_n, int depth,
                                    std::vector<Vec3> values) {
  map_ = f;
  grid_n_ = grid_n;
  depth_ = depth;
  values_ = std::move(values);
}

Vec3 DisplacementField::eval_interp(const Vec3& x) const {
  const int n = grid_n_;
  Vec3 g = Vec3(frac_unit(x[0]), frac_unit(x[1]), frac_unit(x[2])) * n;
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
  auto at = [&](int a, int b, int c) -> const Vec3& {
    return values_[static_cast<std::size_t>(a) +
                   static_cast<std::size_t>(n) *
                       (static_cast<std::size_t>(b) + static_cast<std::size_t>(n) * c)];
  };
  Vec3 acc = Vec3::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        acc += ((a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) *
                (c ? w[2] : 1 - w[2])) *
               at(a ? i1[0] : i0[0], b ? i1[1] : i0[1], c ? i1[2] : i0[2]);
  return acc;
}

Vec3 DisplacementField::eval_direct(const Vec3& x) const {
  return series_eval(map_, x, depth_);
}

DisplacementField solve_h(const DAMap& f, int grid_n, int depth, double tol) {
  const auto& kappa = f.spectral.kappa;
  double tail = f.amplitude *
                (std::pow(kappa[1], depth) / (1.0 - kappa[1]) +
                 std::pow(kappa[2], -(depth + 1)) / (1.0 - 1.0 / kappa[2]));
  if (tol <= 0.0) tol = std::max(1e-11, 10.0 * tail);

  std::vector<Vec3> vals(static_cast<std::size_t>(grid_n) * grid_n * grid_n,
                         Vec3::Zero());
  if (f.amplitude != 0.0) {
    parallel_chunks(vals.size(), 128, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t idx = lo; idx < hi; ++idx) {
        int ix = static_cast<int>(idx % grid_n);
        int iy = static_cast<int>((idx / grid_n) % grid_n);
        int iz = static_cast<int>(idx / (static_cast<std::size_t>(grid_n) * grid_n));
        Vec3 x(static_cast<double>(ix) / grid_n, static_cast<double>(iy) / grid_n,
               static_cast<double>(iz) / grid_n);
        vals[idx] = series_eval(f, x, depth);
      }
    });
  }

  DisplacementField u;
  u.assign_grid(f, grid_n, depth, std::move(vals));
  u.truncation_bound = tail;

  // direct-eval residual sup of dist(h(f x), A h(x)) on a 17^3 off-grid set
  const int tn = 17;
  Mat3 a = f.matrix_real();
  double worst = 0.0, worst_dev = 0.0;
  std::mutex mu;
  parallel_chunks(static_cast<std::size_t>(tn) * tn * tn, 32,
                  [&](std::size_t lo, std::size_t hi) {
    double w = 0.0, wd = 0.0;
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int i = static_cast<int>(idx % tn);
      int j = static_cast<int>((idx / tn) % tn);
      int k = static_cast<int>(idx / (tn * tn));
      Vec3 x = test_point(i, j, k, tn);
      Vec3 hx = x + u.eval_direct(x);
      Vec3 hfx = f.eval(TorusPoint(x)).coords;
      hfx += u.eval_direct(hfx);
      w = std::max(w, wrap_delta(hfx - a * hx).norm());
      wd = std::max(wd, (u.eval_direct(x) - u.eval_interp(x)).norm());
    }
    std::lock_guard<std::mutex> lk(mu);
    worst = std::max(worst, w);
    worst_dev = std::max(worst_dev, wd);
  });
  u.residual_sup = worst;
  u.interp_deviation = worst_dev;

  // finite-difference Lipschitz estimate over grid edges
  double lip = 0.0;
  const auto& v = u.raw_values();
  auto id3 = [&](int a_, int b_, int c_) {
    return static_cast<std::size_t>(a_ % grid_n) +
           static_cast<std::size_t>(grid_n) *
               (static_cast<std::size_t>(b_ % grid_n) +
                static_cast<std::size_t>(grid_n) * (c_ % grid_n));
  };
  for (int iz = 0; iz < grid_n; ++iz)
    for (int iy = 0; iy < grid_n; ++iy)
      for (int ix = 0; ix < grid_n; ++ix) {
        const Vec3& base = v[id3(ix, iy, iz)];
        lip = std::max(lip, (v[id3(ix + 1, iy, iz)] - base).norm() * grid_n);
        lip = std::max(lip, (v[id3(ix, iy + 1, iz)] - base).norm() * grid_n);
        lip = std::max(lip, (v[id3(ix, iy, iz + 1)] - base).norm() * grid_n);
      }
  u.lipschitz_est = lip;

  if (u.residual_sup > tol)
    throw DepthInsufficient("semiconjugacy residual " + std::to_string(u.residual_sup) +
                            " exceeds tolerance " + std::to_string(tol) +
                            "; increase depth (currently " + std::to_string(depth) + ")");
  return u;
}

TorusPoint eval_h(const DisplacementField& u, const TorusPoint& x, bool direct) {
  return u.h(x, direct);
}

InversionResult try_invert_h(const DisplacementField& u, const TorusPoint& z,
                             double tol, int max_iter, bool direct) {
  InversionResult res;
  Vec3 y = z.coords;
  double beta = 1.0;
  Vec3 r = wrap_delta(y + u.eval(y, direct) - z.coords);
  double rn = r.norm();
  int it = 0;
  for (; it < max_iter && rn >= tol; ++it) {
    Vec3 ytry = torus_reduce(y - beta * r).coords;
    Vec3 rtry = wrap_delta(ytry + u.eval(ytry, direct) - z.coords);
    double rtn = rtry.norm();
    if (rtn < rn) {
      y = ytry;
      r = rtry;
      rn = rtn;
      if (beta < 1.0) beta *= 1.5;
    } else {
      beta *= 0.5;
      if (beta < 1.0 / 64.0) break;
    }
  }

  if (rn >= tol) {
    // center-line secant: the residual of a stalled iterate is a center shift
    Vec3 ec = u.map().spectral.frame.col(1);
    double t0 = 0.0, t1 = rn * (r.dot(ec) >= 0 ? -1.0 : 1.0);
    auto g = [&](double t) {
      Vec3 p = torus_reduce(y + t * ec).coords;
      return wrap_delta(p + u.eval(p, direct) - z.coords).dot(ec);
    };
    double g0 = g(t0), g1 = g(t1);
    for (int k = 0; k < 40 && std::abs(g1) > tol * 0.5; ++k) {
      if (g1 == g0) break;
      double t2 = t1 - g1 * (t1 - t0) / (g1 - g0);
      t0 = t1;
      g0 = g1;
      t1 = t2;
      g1 = g(t1);
    }
    Vec3 ytry = torus_reduce(y + t1 * ec).coords;
    Vec3 rtry = wrap_delta(ytry + u.eval(ytry, direct) - z.coords);
    if (rtry.norm() < rn) {
      y = ytry;
      r = rtry;
      rn = r.norm();
    }
    // damped restart after the 1D polish
    for (int k = 0; k < max_iter && rn >= tol; ++k, ++it) {
      Vec3 yt = torus_reduce(y - 0.5 * r).coords;
      Vec3 rt = wrap_delta(yt + u.eval(yt, direct) - z.coords);
      if (rt.norm() >= rn) break;
      y = yt;
      r = rt;
      rn = rt.norm();
    }
  }

  res.y = TorusPoint(torus_reduce(y).coords);
  res.converged = rn < tol;
  res.iterations = it;
  res.residual = rn;
  return res;
}

TorusPoint invert_h(const DisplacementField& u, const TorusPoint& z, double tol,
                    int max_iter, bool direct) {
  InversionResult r = try_invert_h(u, z, tol, max_iter, direct);
  if (!r.converged)
    throw InversionFailed("h inversion stalled at residual " +
                          std::to_string(r.residual) +
                          " (candidate nontrivial fiber)");
  return r.y;
}

double fiber_probe(const DisplacementField& u, const DAMap& f, const FrameField& frames,
                   const TorusPoint& z, double arc_len, double fiber_tol) {
  InversionResult inv = try_invert_h(u, z, 1e-10, 80, true);
  if (!inv.converged) return arc_len;  // conservative: report the probe span
  const int half = 40;
  double step = arc_len / (2 * half);
  // integrate the center field both ways, collecting points with h(p) ~ z
  double lo = 0.0, hi = 0.0;
  for (int dir = -1; dir <= 1; dir += 2) {
    Vec3 p = inv.y.coords;
    for (int k = 1; k <= half; ++k) {
      Vec3 ec = frames.center_at(p);
      p = torus_reduce(p + dir * step * ec).coords;
      double d = torus_dist(u.h(TorusPoint(p), true), z);
      if (d < fiber_tol) {
        if (dir < 0)
          lo = k * step;
        else
          hi = k * step;
      } else {
        break;
      }
    }
  }
  return lo + hi;
}

QuasiIsometryFit quasi_isometry_probe(const DAMap& f, const FrameField& frames,
                                      LeafFamily leaf, int n_pairs,
                                      std::uint64_t seed) {
  int col = leaf == LeafFamily::Stable ? 0 : (leaf == LeafFamily::Center ? 1 : 2);
  std::vector<double> dleaf(n_pairs), damb(n_pairs);
  parallel_chunks(static_cast<std::size_t>(n_pairs), 8,
                  [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      CounterRng rng(seed, i);
      Vec3 start(rng.next_double(), rng.next_double(), rng.next_double());
      double arc = 0.05 + 2.0 * rng.next_double();
      // arclength-parametrized RK4 along the unit leaf field, in the lift
      Vec3 p = start;
      double step = 1e-2;
      int nsteps = static_cast<int>(std::ceil(arc / step));
      double h = arc / nsteps;
      Vec3 ref = frames.frame_at(torus_reduce(p).coords).col(col);
      for (int k = 0; k < nsteps; ++k) {
        auto dir = [&](const Vec3& q) {
          Vec3 v = frames.frame_at(torus_reduce(q).coords).col(col);
          if (v.dot(ref) < 0) v = -v;
          return v;
        };
        Vec3 k1 = dir(p);
        Vec3 k2 = dir(p + 0.5 * h * k1);
        Vec3 k3 = dir(p + 0.5 * h * k2);
        Vec3 k4 = dir(p + h * k3);
        Vec3 d = (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!d.allFinite() || d.norm() > 2 * h)
          throw LeafIntegrationDiverged("leaf arc integration lost the field");
        ref = dir(p);
        p += d;
      }
      dleaf[i] = arc;
      damb[i] = (p - start).norm();  // Euclidean distance in the cover
    }
  });

  // minimal (a, b): fix b as the longest arc with negligible ambient distance,
  // then a is the max residual slope
  QuasiIsometryFit fit;
  fit.pairs = n_pairs;
  double b = 0.0;
  for (int i = 0; i < n_pairs; ++i)
    if (damb[i] < 1e-6) b = std::max(b, dleaf[i]);
  double a = 0.0;
  for (int i = 0; i < n_pairs; ++i)
    if (damb[i] >= 1e-6) a = std::max(a, (dleaf[i] - b) / damb[i]);
  fit.a = a;
  fit.b = b;
  return fit;
}

}  // namespace datorus
