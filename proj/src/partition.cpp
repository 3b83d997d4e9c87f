#include <algorithm>
#include <cmath>

#include "datorus/plaques.hpp"
#include "datorus/rng.hpp"

namespace datorus {

namespace {
constexpr double kEdgeTol = 1e-13;
}

Vec3i BoxPartition::box_of_c(const Vec3& c) const {
  Vec3i b;
  for (int i = 0; i < 3; ++i) {
    double q = (c[i] - cmin[i]) / width[i];
    double fl = std::floor(q);
    // a point within tolerance of a bin edge belongs to the lower-index bin
    if (q - fl < kEdgeTol && fl > 0) fl -= 1.0;
    long idx = static_cast<long>(fl);
    idx = std::clamp<long>(idx, 0, boxes_per_axis - 1);
    b[i] = idx;
  }
  return b;
}

BoxPartition linear_partition(const SpectralData& s, int boxes_per_axis) {
  if (boxes_per_axis < 1) throw std::invalid_argument("boxes_per_axis must be >= 1");
  BoxPartition p;
  p.spec = s;
  p.boxes_per_axis = boxes_per_axis;
  for (int i = 0; i < 3; ++i) {
    double lo = 0.0, hi = 0.0;
    for (int j = 0; j < 3; ++j) {
      double d = s.dual_frame(i, j);
      lo += std::min(d, 0.0);
      hi += std::max(d, 0.0);
    }
    p.cmin[i] = lo;
    p.cmax[i] = hi;
    p.width[i] = (hi - lo) / boxes_per_axis;
  }
  return p;
}

std::vector<BoxPartition::CutEvent> BoxPartition::cut_events(const Vec3& base,
                                                             double ta,
                                                             double tb) const {
  const Vec3 e3 = spec.frame.col(2);
  std::vector<CutEvent> ev;

  // fundamental-domain faces: coordinate i of base + T e3 crossing an integer
  for (int i = 0; i < 3; ++i) {
    double v = e3[i];
    if (std::abs(v) < 1e-14) continue;
    double k0 = std::ceil(std::min(base[i] + ta * v, base[i] + tb * v) - 1e-12);
    double k1 = std::floor(std::max(base[i] + ta * v, base[i] + tb * v) + 1e-12);
    for (double k = k0; k <= k1; k += 1.0) {
      double t = (k - base[i]) / v;
      if (t > ta + kEdgeTol && t < tb - kEdgeTol) ev.push_back({t, true});
    }
  }
  std::sort(ev.begin(), ev.end(),
            [](const CutEvent& a, const CutEvent& b) { return a.t < b.t; });

  // c3 bin boundaries, per wrap-free segment (c3 of the canonical rep moves
  // with unit slope between wraps)
  std::vector<CutEvent> bins;
  double seg_lo = ta;
  for (std::size_t w = 0; w <= ev.size(); ++w) {
    double seg_hi = (w < ev.size()) ? ev[w].t : tb;
    if (seg_hi - seg_lo > kEdgeTol) {
      double tmid = 0.5 * (seg_lo + seg_hi);
      Vec3 rep = torus_reduce(base + tmid * e3).coords;
      double c3mid = spec.dual_frame.row(2) * rep;
      double c3lo = c3mid - (tmid - seg_lo);
      double m0 = std::ceil((c3lo - cmin[2]) / width[2] - 1e-12);
      for (double m = m0;; m += 1.0) {
        double t = seg_lo + (cmin[2] + m * width[2] - c3lo);
        if (t >= seg_hi - kEdgeTol) break;
        if (t > seg_lo + kEdgeTol) bins.push_back({t, false});
      }
    }
    seg_lo = seg_hi;
  }
  ev.insert(ev.end(), bins.begin(), bins.end());
  std::sort(ev.begin(), ev.end(),
            [](const CutEvent& a, const CutEvent& b) { return a.t < b.t; });
  // merge events closer than the edge tolerance
  std::vector<CutEvent> out;
  for (const auto& e : ev) {
    if (!out.empty() && e.t - out.back().t < 1e-11)
      out.back().is_wrap = out.back().is_wrap || e.is_wrap;
    else
      out.push_back(e);
  }
  return out;
}

BoxPartition::LineWindow BoxPartition::plaque_window(const Vec3& base) const {
  const Vec3 e3 = spec.frame.col(2);
  // plaques are shorter than one c3 bin plus one wrap gap; this span is safe
  double span = width[2] + 2.0;
  auto ev = cut_events(base, -span, span);
  double lo = -span, hi = span;
  for (const auto& e : ev) {
    if (e.t <= 0.0 && e.t > lo) lo = e.t;
    if (e.t > 0.0 && e.t < hi) hi = e.t;
  }
  LineWindow w;
  w.tlo = lo;
  w.thi = hi;
  Vec3 rep = torus_reduce(base + 0.5 * (lo + hi) * e3).coords;
  Vec3 c = spec.eigen_coords(rep);
  w.box = box_of_c(c);
  w.c3_abs_lo = c[2] - (0.5 * (lo + hi) - lo);
  return w;
}

MarkovDefectReport measure_markov_defect(const BoxPartition& part, int n_samples,
                                         std::uint64_t seed) {
  const Vec3 e3 = part.spec.frame.col(2);
  const Mat3 a = part.spec.base.real();
  const double mu3 = part.spec.mu[2];
  MarkovDefectReport rep;
  double defect = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    CounterRng rng(seed, static_cast<std::uint64_t>(s));
    Vec3 z(rng.next_double(), rng.next_double(), rng.next_double());
    auto w = part.plaque_window(z);
    double len = w.thi - w.tlo;
    if (len < 1e-9) continue;
    // image line of the plaque under A
    Vec3 base2 = a * z;
    double i0 = mu3 * w.tlo, i1 = mu3 * w.thi;
    if (i0 > i1) std::swap(i0, i1);
    auto ev = part.cut_events(base2, i0, i1);
    std::vector<double> cuts{i0};
    for (auto& e : ev) cuts.push_back(e.t);
    cuts.push_back(i1);
    double partial = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      double clo = cuts[k], chi = cuts[k + 1];
      if (chi - clo < 1e-11) continue;
      Vec3 mid = base2 + 0.5 * (clo + chi) * e3;
      auto full = part.plaque_window(torus_reduce(mid).coords);
      // the membership window through the midpoint, in this line's T frame
      double shift = 0.5 * (clo + chi);
      double flo = shift + full.tlo, fhi = shift + full.thi;
      bool is_full = std::abs(flo - clo) < 1e-8 && std::abs(fhi - chi) < 1e-8;
      if (!is_full) partial += (chi - clo);
    }
    defect += partial / (i1 - i0);
    rep.plaques_sampled += 1;
  }
  rep.defect_mass_fraction = rep.plaques_sampled ? defect / rep.plaques_sampled : 0.0;
  return rep;
}

}  // namespace datorus
