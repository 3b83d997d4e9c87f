#include "datorus/plaques.hpp"

#include <algorithm>
#include <cmath>

namespace datorus {

namespace {

// f-side point with h(y) = line_base + T e3, warm-started from `guess`
TorusPoint invert_on_line(const DisplacementField& u, const Vec3& line_base,
                          const Vec3& e3, double T, const Vec3& guess,
                          const PlaqueOptions& opt) {
  Vec3 target = torus_reduce(line_base + T * e3).coords;
  Vec3 y = guess;
  double beta = 1.0;
  Vec3 r = wrap_delta(y + u.eval(y, opt.direct_eval) - target);
  double rn = r.norm();
  for (int it = 0; it < 80 && rn >= opt.invert_tol; ++it) {
    Vec3 ytry = torus_reduce(y - beta * r).coords;
    Vec3 rtry = wrap_delta(ytry + u.eval(ytry, opt.direct_eval) - target);
    if (rtry.norm() < rn) {
      y = ytry;
      r = rtry;
      rn = rtry.norm();
      if (beta < 1.0) beta *= 1.5;
    } else {
      beta *= 0.5;
      if (beta < 1.0 / 128.0) break;
    }
  }
  if (rn >= opt.invert_tol * 10) {
    InversionResult res =
        try_invert_h(u, TorusPoint(target), opt.invert_tol, 80, opt.direct_eval);
    if (!res.converged)
      throw LeafIntegrationStalled("node inversion stalled at residual " +
                                   std::to_string(res.residual));
    return res.y;
  }
  return TorusPoint(y);
}

Plaque build_plaque_nodes(const DisplacementField& u, const BoxPartition& part,
                          const Vec3& line_base, double ta, double tb,
                          const Vec3& start_guess, double start_T,
                          const PlaqueOptions& opt) {
  const Vec3 e3 = part.spec.frame.col(2);
  Plaque p;
  p.line_base = line_base;
  p.ta = ta;
  p.tb = tb;

  int count = std::max(2, static_cast<int>(std::ceil((tb - ta) / opt.node_step)) + 1);
  p.nodes.resize(count);
  p.h_param.resize(count);
  p.f_arclen.resize(count);
  double dt = (tb - ta) / (count - 1);

  int j0 = std::clamp(static_cast<int>(std::round((start_T - ta) / dt)), 0, count - 1);
  p.nodes[j0] = invert_on_line(u, line_base, e3, ta + j0 * dt, start_guess, opt);
  for (int j = j0 + 1; j < count; ++j)
    p.nodes[j] =
        invert_on_line(u, line_base, e3, ta + j * dt, p.nodes[j - 1].coords, opt);
  for (int j = j0 - 1; j >= 0; --j)
    p.nodes[j] =
        invert_on_line(u, line_base, e3, ta + j * dt, p.nodes[j + 1].coords, opt);

  for (int j = 0; j < count; ++j) p.h_param[j] = j * dt;
  p.f_arclen[0] = 0.0;
  for (int j = 1; j < count; ++j)
    p.f_arclen[j] = p.f_arclen[j - 1] + torus_dist(p.nodes[j], p.nodes[j - 1]);

  Vec3 mid_rep = torus_reduce(line_base + 0.5 * (ta + tb) * e3).coords;
  Vec3 c = part.spec.eigen_coords(mid_rep);
  p.box_id = part.box_of_c(c);
  p.c3_abs_lo = c[2] - 0.5 * (tb - ta);
  p.base = p.nodes[j0];

  // transverse audit of the h-image on three nodes
  for (int j : {0, count / 2, count - 1}) {
    Vec3 img = u.h_lift(p.nodes[j].coords, opt.direct_eval);
    Vec3 dev = wrap_delta(img - (line_base + (ta + j * dt) * e3));
    dev -= dev.dot(e3) * e3;
    if (dev.norm() > 1e-6)
      throw HImageNonMonotone("plaque node h-image off the unstable line by " +
                              std::to_string(dev.norm()));
  }
  return p;
}

// atom cell [lo, hi] around node j from midpoints of the parameter sequence
void atom_cell(const std::vector<double>& t, std::size_t j, double& lo, double& hi) {
  lo = (j == 0) ? t.front() : 0.5 * (t[j - 1] + t[j]);
  hi = (j + 1 == t.size()) ? t.back() : 0.5 * (t[j] + t[j + 1]);
}

}  // namespace

TorusPoint invert_on_unstable_line(const DisplacementField& u, const Vec3& line_base,
                                   double T, const Vec3& guess,
                                   const PlaqueOptions& opt) {
  return invert_on_line(u, line_base, u.map().spectral.frame.col(2), T, guess, opt);
}

Plaque grow_plaque(const DisplacementField& u, const FrameField& frames,
                   const BoxPartition& part, const TorusPoint& y,
                   const PlaqueOptions& opt) {
  (void)frames;  // node construction tracks the h-image line directly
  Vec3 hy = torus_reduce(y.coords + u.eval(y.coords, opt.direct_eval)).coords;
  auto w = part.plaque_window(hy);
  Plaque p = build_plaque_nodes(u, part, hy, w.tlo, w.thi, y.coords, 0.0, opt);
  p.base = y;
  p.box_id = w.box;
  p.full_plaque = true;
  return p;
}

Plaque grow_plaque_on_window(const DisplacementField& u, const BoxPartition& part,
                             const Vec3& line_base, double ta, double tb,
                             const PlaqueOptions& opt) {
  const Vec3 e3 = part.spec.frame.col(2);
  double tmid = 0.5 * (ta + tb);
  Vec3 target_mid = torus_reduce(line_base + tmid * e3).coords;
  InversionResult res =
      try_invert_h(u, TorusPoint(target_mid), opt.invert_tol, 80, opt.direct_eval);
  if (!res.converged)
    throw ChildConstructionFailed("window midpoint inversion failed");
  Plaque p = build_plaque_nodes(u, part, line_base, ta, tb, res.y.coords, tmid, opt);

  auto full = part.plaque_window(target_mid);
  double flo = tmid + full.tlo, fhi = tmid + full.thi;
  p.full_plaque = std::abs(flo - ta) < 1e-8 && std::abs(fhi - tb) < 1e-8;
  return p;
}

WeightedPlaqueMeasure reference_measure(const Plaque& p, double gamma) {
  WeightedPlaqueMeasure m;
  m.plaque = p;
  const std::size_t n = p.nodes.size();
  m.weights.assign(n, 0.0);
  m.log_density.assign(n, 0.0);
  double total = p.h_param.back() - p.h_param.front();
  for (std::size_t j = 0; j < n; ++j) {
    double lo, hi;
    atom_cell(p.h_param, j, lo, hi);
    m.weights[j] = (hi - lo) / total;
  }
  m.holder_const = 0.0;
  m.holder_exp = gamma;
  m.total_mass = 1.0;
  return m;
}

TransferSplit transfer_split(const DisplacementField& u, const FrameField& frames,
                             const BoxPartition& part, const Plaque& p,
                             const PlaqueOptions& opt) {
  (void)frames;
  const Mat3 a = part.spec.base.real();
  const double mu3 = part.spec.mu[2];

  TransferSplit split;
  split.parent = p;

  Vec3 base2 = a * p.line_base;
  double i0 = mu3 * p.ta, i1 = mu3 * p.tb;
  if (i0 > i1) std::swap(i0, i1);

  auto ev = part.cut_events(base2, i0, i1);
  std::vector<double> cuts{i0};
  for (auto& e : ev) cuts.push_back(e.t);
  cuts.push_back(i1);

  double total = i1 - i0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double clo = cuts[k], chi = cuts[k + 1];
    if (chi - clo < 1e-10) continue;
    Plaque child;
    try {
      child = grow_plaque_on_window(u, part, base2, clo, chi, opt);
    } catch (const LeafIntegrationStalled& e) {
      throw ChildConstructionFailed(e.what());
    }
    split.children.push_back(std::move(child));
    split.weights.push_back((chi - clo) / total);
    double plo = clo / mu3, phi = chi / mu3;
    if (plo > phi) std::swap(plo, phi);
    split.preim_lo.push_back(plo - p.ta);
    split.preim_hi.push_back(phi - p.ta);
    if (!split.children.back().full_plaque)
      split.markov_defect_mass += split.weights.back();
  }
  if (split.children.empty())
    throw ChildConstructionFailed("image produced no usable children");
  return split;
}

double measured_holder_const(const WeightedPlaqueMeasure& l) {
  const auto& nodes = l.plaque.nodes;
  double best = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      double d = torus_dist(nodes[i], nodes[j]);
      if (d < 1e-12) continue;
      double q =
          std::abs(l.log_density[i] - l.log_density[j]) / std::pow(d, l.holder_exp);
      best = std::max(best, q);
    }
  return best;
}

std::vector<double> pushforward_density_variation(const TransferSplit& split,
                                                  const DisplacementField& u) {
  // Map parent nodes forward through f, re-measure their image parameter with
  // a fresh h evaluation, and bin the pushed atom masses against each child's
  // reference cells. Non-constancy of the Jacobian would show up as cellwise
  // density drift.
  const Plaque& p = split.parent;
  const DAMap& f = u.map();
  const Vec3 e3 = u.map().spectral.frame.col(2);
  const Mat3 a = u.map().spectral.base.real();
  const double mu3 = u.map().spectral.mu[2];
  const Vec3 base2 = a * p.line_base;

  WeightedPlaqueMeasure pref = reference_measure(p);
  // measured image parameters of all parent nodes, in the base2 frame
  std::vector<double> s(p.nodes.size());
  for (std::size_t j = 0; j < p.nodes.size(); ++j) {
    double expected = mu3 * (p.ta + p.h_param[j]);
    Vec3 img = u.h_lift(f.eval(p.nodes[j]).coords, true);
    s[j] = expected + e3.dot(wrap_delta(img - (base2 + expected * e3)));
  }

  std::vector<double> out(split.children.size(), 0.0);
  for (std::size_t c = 0; c < split.children.size(); ++c) {
    const Plaque& ch = split.children[c];
    double clo = mu3 * (p.ta + split.preim_lo[c]);
    double chi = mu3 * (p.ta + split.preim_hi[c]);
    if (clo > chi) std::swap(clo, chi);

    // pushed atoms: parent cells in measured image coordinates
    std::vector<double> slo(p.nodes.size()), shi(p.nodes.size());
    for (std::size_t j = 0; j < p.nodes.size(); ++j) {
      double alo = (j == 0) ? s.front() : 0.5 * (s[j - 1] + s[j]);
      double ahi = (j + 1 == s.size()) ? s.back() : 0.5 * (s[j] + s[j + 1]);
      slo[j] = std::min(alo, ahi);
      shi[j] = std::max(alo, ahi);
    }

    const int ncells = 8;
    std::vector<double> pushed(ncells, 0.0), refc(ncells, 0.0);
    auto add_mass = [&](std::vector<double>& cells, double lo, double hi,
                        double mass) {
      lo = std::max(lo, clo);
      hi = std::min(hi, chi);
      if (hi <= lo) return;
      for (int q = 0; q < ncells; ++q) {
        double qlo = clo + (chi - clo) * q / ncells;
        double qhi = clo + (chi - clo) * (q + 1) / ncells;
        double ov = std::max(0.0, std::min(hi, qhi) - std::max(lo, qlo));
        if (ov > 0) cells[q] += mass * ov / (hi - lo);
      }
    };
    for (std::size_t j = 0; j < p.nodes.size(); ++j)
      if (shi[j] > slo[j]) {
        double lo = std::max(slo[j], clo), hi = std::min(shi[j], chi);
        if (hi > lo)
          add_mass(pushed, slo[j], shi[j],
                   pref.weights[j] * (hi - lo) / (shi[j] - slo[j]));
      }
    WeightedPlaqueMeasure chref = reference_measure(ch);
    for (std::size_t j = 0; j < ch.nodes.size(); ++j) {
      double alo, ahi;
      atom_cell(ch.h_param, j, alo, ahi);
      add_mass(refc, clo + alo, clo + ahi, chref.weights[j]);
    }
    double ptot = 0.0, rtot = 0.0;
    for (int q = 0; q < ncells; ++q) {
      ptot += pushed[q];
      rtot += refc[q];
    }
    double rmin = 1e300, rmax = -1e300;
    for (int q = 0; q < ncells; ++q) {
      if (refc[q] <= 0 || rtot <= 0 || ptot <= 0) continue;
      double r = (pushed[q] / ptot) / (refc[q] / rtot);
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
    out[c] = (rmax > rmin) ? (rmax - rmin) / (0.5 * (rmax + rmin)) : 0.0;
  }
  return out;
}

HolonomyResult cs_holonomy(const WeightedPlaqueMeasure& src, const TorusPoint& dst_base,
                           const DisplacementField& u, const FrameField& frames,
                           const BoxPartition& part, const PlaqueOptions& opt) {
  Plaque dst = grow_plaque(u, frames, part, dst_base, opt);
  if (dst.box_id != src.plaque.box_id)
    throw NotSameBox("destination plaque lies in a different partition box");

  const Vec3 e3 = part.spec.frame.col(2);
  HolonomyResult res;
  WeightedPlaqueMeasure& out = res.transported;
  out.holder_const = src.holder_const;
  out.holder_exp = src.holder_exp;

  std::vector<Vec3> pts;
  std::vector<double> wts, gs, offs;
  double dropped = 0.0;
  Vec3 guess = dst.nodes.front().coords;
  for (std::size_t j = 0; j < src.plaque.nodes.size(); ++j) {
    double c3 = src.plaque.c3_abs_lo + src.plaque.h_param[j];
    double T = (c3 - dst.c3_abs_lo) + dst.ta;
    if (T < dst.ta - 1e-9 || T > dst.tb + 1e-9) {
      dropped += src.weights[j];
      continue;
    }
    TorusPoint y = invert_on_line(u, dst.line_base, e3, T, guess, opt);
    guess = y.coords;
    pts.push_back(y.coords);
    wts.push_back(src.weights[j]);
    gs.push_back(src.log_density[j]);
    offs.push_back(T - dst.ta);
  }
  if (pts.empty())
    throw HolonomyOutOfPlaque("no source offset lands inside the destination plaque");

  double kept = 0.0;
  for (double w : wts) kept += w;
  out.plaque = dst;
  out.plaque.nodes.clear();
  out.plaque.h_param.clear();
  out.plaque.f_arclen.assign(pts.size(), 0.0);
  out.weights.resize(pts.size());
  out.log_density = gs;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    out.plaque.nodes.emplace_back(pts[j]);
    out.plaque.h_param.push_back(offs[j]);
    out.weights[j] = wts[j] / kept;
    if (j > 0)
      out.plaque.f_arclen[j] =
          out.plaque.f_arclen[j - 1] + torus_dist(out.plaque.nodes[j], out.plaque.nodes[j - 1]);
  }
  res.dropped_mass = dropped;

  // matched-cell audit against the destination reference measure over the
  // common offset range, both renormalized; atoms split exactly at cell edges
  double olo = offs.front(), ohi = offs.back();
  if (ohi > olo) {
    const int ncells = 12;
    auto bin = [&](const std::vector<double>& offv, const std::vector<double>& wv) {
      std::vector<double> cells(ncells, 0.0);
      double tot = 0.0;
      for (std::size_t j = 0; j < offv.size(); ++j) {
        double lo, hi;
        atom_cell(offv, j, lo, hi);
        lo = std::max(lo, olo);
        hi = std::min(hi, ohi);
        if (hi <= lo) continue;
        tot += wv[j];
        int c0 = std::clamp(static_cast<int>((lo - olo) / (ohi - olo) * ncells), 0,
                            ncells - 1);
        int c1 = std::clamp(static_cast<int>((hi - olo) / (ohi - olo) * ncells), 0,
                            ncells - 1);
        for (int q = c0; q <= c1; ++q) {
          double qlo = olo + (ohi - olo) * q / ncells;
          double qhi = olo + (ohi - olo) * (q + 1) / ncells;
          double ov = std::max(0.0, std::min(hi, qhi) - std::max(lo, qlo));
          cells[q] += wv[j] * ov / (hi - lo);
        }
      }
      if (tot > 0)
        for (auto& cq : cells) cq /= tot;
      return cells;
    };
    WeightedPlaqueMeasure dref = reference_measure(dst);
    auto cs = bin(offs, wts);
    auto cd = bin(dst.h_param, dref.weights);
    for (int q = 0; q < ncells; ++q)
      res.max_cell_discrepancy =
          std::max(res.max_cell_discrepancy, std::abs(cs[q] - cd[q]));
  }
  return res;
}

TransferStepResult transfer_step(const WeightedPlaqueMeasure& l,
                                 const DisplacementField& u, const FrameField& frames,
                                 const BoxPartition& part, double lambda5_min,
                                 const PlaqueOptions& opt) {
  TransferSplit split = transfer_split(u, frames, part, l.plaque, opt);
  const double mu3 = part.spec.mu[2];
  const auto& hp = l.plaque.h_param;

  auto G_at = [&](double t_rel) {
    auto it = std::upper_bound(hp.begin(), hp.end(), t_rel);
    std::size_t j1 =
        std::clamp<std::size_t>(static_cast<std::size_t>(it - hp.begin()), 1,
                                hp.size() - 1);
    std::size_t j0 = j1 - 1;
    double w = (t_rel - hp[j0]) / std::max(1e-300, hp[j1] - hp[j0]);
    w = std::clamp(w, 0.0, 1.0);
    return (1.0 - w) * l.log_density[j0] + w * l.log_density[j1];
  };

  TransferStepResult out;
  std::vector<double> masses;
  for (std::size_t c = 0; c < split.children.size(); ++c) {
    Plaque& ch = split.children[c];
    WeightedPlaqueMeasure m = reference_measure(ch, l.holder_exp);
    // G o f^{-1}: child parameter T' maps back to the parent at T'/mu3
    double t0 = (mu3 > 0) ? split.preim_lo[c] : split.preim_hi[c];
    for (std::size_t j = 0; j < ch.nodes.size(); ++j)
      m.log_density[j] = G_at(t0 + ch.h_param[j] / mu3);
    double z = 0.0;
    for (std::size_t j = 0; j < m.weights.size(); ++j)
      z += m.weights[j] * std::exp(m.log_density[j]);
    masses.push_back(split.weights[c] * z);
    for (std::size_t j = 0; j < m.weights.size(); ++j)
      m.weights[j] = m.weights[j] * std::exp(m.log_density[j]) / z;
    m.holder_const = l.holder_const * std::exp(-lambda5_min * l.holder_exp);
    out.measured_child_holder.push_back(measured_holder_const(m));
    out.children.push_back(std::move(m));
  }
  double total = 0.0;
  for (double m : masses) total += m;
  for (auto& m : masses) m /= total;
  out.weights = std::move(masses);
  return out;
}

std::pair<WeightedPlaqueMeasure, double> project_E0(const WeightedPlaqueMeasure& l) {
  WeightedPlaqueMeasure ref = reference_measure(l.plaque, l.holder_exp);
  double dist = 0.0;
  for (std::size_t j = 0; j < ref.weights.size(); ++j)
    dist += std::abs(l.weights[j] / l.total_mass - ref.weights[j]);
  return {ref, dist};
}

double leaf_bijectivity_check(const DisplacementField& u, const Plaque& plaque) {
  const Vec3 e3 = u.map().spectral.frame.col(2);
  double mininc = 1e300;
  double prev = 0.0;
  for (std::size_t j = 0; j < plaque.nodes.size(); ++j) {
    // re-measure the image parameter with a fresh h evaluation, via the lift
    // closest to the expected line position
    Vec3 img = u.h_lift(plaque.nodes[j].coords, true);
    double expected = plaque.ta + plaque.h_param[j];
    Vec3 line_pt = plaque.line_base + expected * e3;
    double cur = expected + e3.dot(wrap_delta(img - line_pt));
    if (j > 0) mininc = std::min(mininc, cur - prev);
    prev = cur;
  }
  return mininc;
}

}  // namespace datorus
