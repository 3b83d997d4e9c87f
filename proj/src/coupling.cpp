#include "datorus/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "datorus/parallel.hpp"

namespace datorus {

namespace {

// analytic A-side piece of a forward image, with its preimage interval in the
// originating root segment
struct Seg {
  Vec3 line_base;
  double ta = 0, tb = 0;
  double root_at_ta = 0, root_at_tb = 0;  // order-corresponding root parameters
  double c1 = 0, c2 = 0, c3_lo = 0;
  Vec3i box{0, 0, 0};
  bool full_bin = false;

  double root_mass_fraction(double root_len) const {
    return std::abs(root_at_tb - root_at_ta) / root_len;
  }
};

long box_key(const Vec3i& b, int bpa) {
  return (b[0] * bpa + b[1]) * static_cast<long>(bpa) + b[2];
}

void fill_canonical(const BoxPartition& part, Seg& s) {
  const Vec3 e3 = part.spec.frame.col(2);
  double tmid = 0.5 * (s.ta + s.tb);
  Vec3 rep = torus_reduce(s.line_base + tmid * e3).coords;
  Vec3 c = part.spec.eigen_coords(rep);
  s.c1 = c[0];
  s.c2 = c[1];
  s.c3_lo = c[2] - (tmid - s.ta);
  s.box = part.box_of_c(c);
  double w3 = part.width[2];
  double len = s.tb - s.ta;
  double edge = part.cmin[2] + std::round((s.c3_lo - part.cmin[2]) / w3) * w3;
  s.full_bin = std::abs(len - w3) < 1e-8 && std::abs(s.c3_lo - edge) < 1e-7;
}

// children of one forward step of the segment
void split_seg(const BoxPartition& part, const Seg& s, std::vector<Seg>& out) {
  const Mat3 a = part.spec.base.real();
  const double mu3 = part.spec.mu[2];
  Vec3 base2 = a * s.line_base;
  double i0 = mu3 * s.ta, i1 = mu3 * s.tb;
  bool flip = i0 > i1;
  if (flip) std::swap(i0, i1);
  auto ev = part.cut_events(base2, i0, i1);
  std::vector<double> cuts{i0};
  for (auto& e : ev) cuts.push_back(e.t);
  cuts.push_back(i1);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double clo = cuts[k], chi = cuts[k + 1];
    if (chi - clo < 1e-11) continue;
    Seg ch;
    ch.line_base = base2;
    ch.ta = clo;
    ch.tb = chi;
    // preimage in the parent's T frame, then affinely into root parameters
    double plo = clo / mu3, phi = chi / mu3;
    double span = s.tb - s.ta;
    auto to_root = [&](double t) {
      return s.root_at_ta + (t - s.ta) / span * (s.root_at_tb - s.root_at_ta);
    };
    ch.root_at_ta = to_root(plo);
    ch.root_at_tb = to_root(phi);
    fill_canonical(part, ch);
    out.push_back(ch);
  }
}

struct MatchCandidate {
  std::size_t i1, i2;
  double cs_dist2;
};

double cs_gram_dist2(const SpectralData& spec, double dc1, double dc2) {
  double g12 = spec.frame.col(0).dot(spec.frame.col(1));
  return dc1 * dc1 + dc2 * dc2 + 2.0 * g12 * dc1 * dc2;
}

struct RunTask {
  Seg seg1, seg2;
  double mass = 0.0;
  long base_time = 0;
  int depth = 0;
};

Seg root_seg_from_plaque(const BoxPartition& part, const Plaque& p) {
  Seg s;
  s.line_base = p.line_base;
  s.ta = p.ta;
  s.tb = p.tb;
  s.root_at_ta = p.ta;
  s.root_at_tb = p.tb;
  fill_canonical(part, s);
  return s;
}

struct MatchResult {
  int n0 = 0;
  Seg m1, m2;
  std::vector<Seg> level1, level2;  // full level lists at n0 (complement source)
  std::size_t idx1 = 0, idx2 = 0;   // positions of the matched pieces
  double max_dist = 0.0;
};

// forward-iterate both sides until an eps-matched same-bin full-bin pair exists
MatchResult eps_approach(const CouplingContext& ctx, const Seg& s1, const Seg& s2,
                         const CouplingParams& params) {
  const BoxPartition& part = *ctx.part;
  const double w3 = part.width[2];
  std::vector<Seg> side1{s1}, side2{s2};
  double root_len1 = std::abs(s1.root_at_tb - s1.root_at_ta);
  double root_len2 = std::abs(s2.root_at_tb - s2.root_at_ta);

  for (int n = 1; n <= params.n0_budget; ++n) {
    std::vector<Seg> next1, next2;
    for (const Seg& s : side1) split_seg(part, s, next1);
    for (const Seg& s : side2) split_seg(part, s, next2);
    auto shrink = [&](std::vector<Seg>& v) {
      if (v.size() <= params.level_cap) return;
      std::nth_element(v.begin(), v.begin() + params.level_cap, v.end(),
                       [](const Seg& a, const Seg& b) {
                         return std::abs(a.root_at_tb - a.root_at_ta) >
                                std::abs(b.root_at_tb - b.root_at_ta);
                       });
      v.resize(params.level_cap);
    };
    shrink(next1);
    shrink(next2);
    side1 = std::move(next1);
    side2 = std::move(next2);

    // bucket side-2 full bins by box
    std::map<long, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < side2.size(); ++i)
      if (side2[i].full_bin)
        buckets[box_key(side2[i].box, part.boxes_per_axis)].push_back(i);
    if (buckets.empty()) continue;

    std::vector<MatchCandidate> cands;
    for (std::size_t i = 0; i < side1.size(); ++i) {
      if (!side1[i].full_bin) continue;
      auto it = buckets.find(box_key(side1[i].box, part.boxes_per_axis));
      if (it == buckets.end()) continue;
      for (std::size_t j : it->second) {
        double d2 = cs_gram_dist2(part.spec, side1[i].c1 - side2[j].c1,
                                  side1[i].c2 - side2[j].c2);
        cands.push_back({i, j, d2});
      }
    }
    if (cands.empty()) continue;
    std::sort(cands.begin(), cands.end(),
              [](const MatchCandidate& a, const MatchCandidate& b) {
                if (a.cs_dist2 != b.cs_dist2) return a.cs_dist2 < b.cs_dist2;
                if (a.i1 != b.i1) return a.i1 < b.i1;
                return a.i2 < b.i2;
              });
    if (cands.size() > 48) cands.resize(48);

    // verify the f-side cs-distance at matched offsets on the common bin
    PlaqueOptions opt;
    opt.direct_eval = false;
    opt.invert_tol = 1e-10;
    MatchResult best;
    bool found = false;
    double best_mass = -1.0;
    for (const auto& cd : cands) {
      const Seg& a = side1[cd.i1];
      const Seg& b = side2[cd.i2];
      const int noff = 9;
      double maxd = 0.0;
      bool ok = true;
      for (int q = 0; q < noff && ok; ++q) {
        double off = w3 * (q + 0.5) / noff;
        TorusPoint y1, y2;
        try {
          y1 = invert_on_unstable_line(*ctx.u, a.line_base, a.ta + off,
                                       torus_reduce(a.line_base + (a.ta + off) *
                                                    part.spec.frame.col(2)).coords,
                                       opt);
          y2 = invert_on_unstable_line(*ctx.u, b.line_base, b.ta + off,
                                       torus_reduce(b.line_base + (b.ta + off) *
                                                    part.spec.frame.col(2)).coords,
                                       opt);
        } catch (const LeafIntegrationStalled&) {
          ok = false;
          break;
        }
        maxd = std::max(maxd, torus_dist(y1, y2));
        if (maxd > params.eps) ok = false;
      }
      if (!ok) continue;
      double mass = std::min(a.root_mass_fraction(root_len1),
                             b.root_mass_fraction(root_len2));
      if (mass > best_mass) {
        best_mass = mass;
        best.n0 = n;
        best.m1 = a;
        best.m2 = b;
        best.idx1 = cd.i1;
        best.idx2 = cd.i2;
        best.max_dist = maxd;
        found = true;
      }
    }
    if (found) {
      best.level1 = std::move(side1);
      best.level2 = std::move(side2);
      return best;
    }
  }
  throw NoEpsApproachWithinBudget(
      "no eps-matched pair within " + std::to_string(params.n0_budget) +
      " steps; eps too small for the box resolution");
}

// one run of the algorithm on a task; returns stopped piece-pairs for the
// recursion and appends coupled pairs to the record
struct RunOutput {
  std::vector<RunTask> stopped;
  double coupled = 0.0;
  double surrendered = 0.0;  // inversion failures etc., reported as uncoupled
  FirstRunResult fr;
};

RunOutput execute_run(const CouplingContext& ctx, const RunTask& task,
                      const CouplingParams& params, CouplingRecord& rec,
                      bool top_level) {
  const BoxPartition& part = *ctx.part;
  const DAMap& f = ctx.map();
  const Vec3 e3 = part.spec.frame.col(2);
  const double mu3 = part.spec.mu[2];
  RunOutput out;

  MatchResult mr = eps_approach(ctx, task.seg1, task.seg2, params);
  double L1 = std::abs(task.seg1.root_at_tb - task.seg1.root_at_ta);
  double L2 = std::abs(task.seg2.root_at_tb - task.seg2.root_at_ta);
  double c1_hat = mr.m1.root_mass_fraction(L1);
  double c2_hat = mr.m2.root_mass_fraction(L2);
  double t1 = 1.0, t2 = 1.0;
  if (c2_hat <= c1_hat)
    t1 = c2_hat / c1_hat;
  else
    t2 = c1_hat / c2_hat;
  double matched_mass = task.mass * c1_hat * t1;  // = task.mass * c2_hat * t2

  out.fr.n0 = mr.n0;
  out.fr.c_hat1 = c1_hat;
  out.fr.c_hat2 = c2_hat;
  out.fr.t_bar1 = t1;
  out.fr.t_bar2 = t2;
  out.fr.matched_mass = c1_hat * t1;
  out.fr.stopped_mass_n0 = 1.0 - c1_hat * t1;
  out.fr.max_matched_distance = mr.max_dist;

  // discretize the matched pair at common bin offsets
  PlaqueOptions opt;
  opt.direct_eval = false;
  opt.invert_tol = 1e-10;
  const double w3 = part.width[2];
  int nnode = std::max(16, static_cast<int>(std::ceil(w3 / params.node_step)));
  double dt = w3 / nnode;
  std::vector<Vec3> nodes1(nnode), nodes2(nnode), pts1(nnode), pts2(nnode);
  std::vector<double> prod(nnode, 1.0);
  {
    Vec3 g1 = torus_reduce(mr.m1.line_base + (mr.m1.ta + 0.5 * dt) * e3).coords;
    Vec3 g2 = torus_reduce(mr.m2.line_base + (mr.m2.ta + 0.5 * dt) * e3).coords;
    for (int j = 0; j < nnode; ++j) {
      double off = (j + 0.5) * dt;
      nodes1[j] = invert_on_unstable_line(*ctx.u, mr.m1.line_base, mr.m1.ta + off,
                                          g1, opt).coords;
      nodes2[j] = invert_on_unstable_line(*ctx.u, mr.m2.line_base, mr.m2.ta + off,
                                          g2, opt).coords;
      g1 = nodes1[j];
      g2 = nodes2[j];
      pts1[j] = nodes1[j];
      pts2[j] = nodes2[j];
    }
  }

  struct Interval {
    int i0, i1;
  };
  std::vector<Interval> alive{{0, nnode}};
  double per_node_mass = matched_mass / nnode;

  for (int m = 1; m <= params.tail_levels && !alive.empty(); ++m) {
    // advance orbits and products
    for (const Interval& iv : alive)
      for (int j = iv.i0; j < iv.i1; ++j) {
        prod[j] *= center_rate(*ctx.frames, f, pts1[j]);
        pts1[j] = f.eval(TorusPoint(pts1[j])).coords;
        pts2[j] = f.eval(TorusPoint(pts2[j])).coords;
      }

    // cut positions at this level, pulled back to bin offsets
    double scale = std::pow(mu3, m);
    Vec3 basem = mr.m1.line_base;
    Mat3 a = part.spec.base.real();
    for (int k = 0; k < m; ++k) basem = a * basem;
    double i0 = scale * mr.m1.ta, i1 = scale * (mr.m1.ta + w3);
    if (i0 > i1) std::swap(i0, i1);
    auto ev = part.cut_events(basem, i0, i1);
    std::vector<int> cut_idx;
    for (const auto& e : ev) {
      double off = e.t / scale - mr.m1.ta;
      int idx = static_cast<int>(std::round(off / dt));
      if (idx > 0 && idx < nnode) cut_idx.push_back(idx);
    }
    std::sort(cut_idx.begin(), cut_idx.end());
    cut_idx.erase(std::unique(cut_idx.begin(), cut_idx.end()), cut_idx.end());

    std::vector<Interval> refined;
    for (const Interval& iv : alive) {
      int start = iv.i0;
      for (int c : cut_idx)
        if (c > start && c < iv.i1) {
          refined.push_back({start, c});
          start = c;
        }
      refined.push_back({start, iv.i1});
    }

    double bound = params.K * std::exp(-params.lambda * m);
    double rbound = params.K * params.eps * std::exp(-params.lambda * m / 2.0);
    std::vector<Interval> keep;
    for (const Interval& iv : refined) {
      double beta = 0.0;
      for (int j = iv.i0; j < iv.i1; ++j) beta = std::max(beta, prod[j]);
      if (beta > bound) {
        double mass = per_node_mass * (iv.i1 - iv.i0);
        long stop_time = task.base_time + mr.n0 + m;
        if (top_level) rec.pn_masses[mr.n0 + m] += mass / task.mass;
        // stopped piece pair at its current level
        RunTask child;
        auto mk = [&](const Seg& base_seg, const Vec3& lb) {
          Seg s;
          s.line_base = lb;
          s.ta = scale * (base_seg.ta + iv.i0 * dt);
          s.tb = scale * (base_seg.ta + iv.i1 * dt);
          if (s.ta > s.tb) std::swap(s.ta, s.tb);
          s.root_at_ta = s.ta;
          s.root_at_tb = s.tb;
          fill_canonical(part, s);
          return s;
        };
        Vec3 basem2 = mr.m2.line_base;
        for (int k = 0; k < m; ++k) basem2 = a * basem2;
        child.seg1 = mk(mr.m1, basem);
        child.seg2 = mk(mr.m2, basem2);
        child.mass = mass;
        child.base_time = stop_time;
        child.depth = task.depth + 1;
        out.stopped.push_back(std::move(child));
      } else {
        keep.push_back(iv);
        // distance audit on the piece's end nodes and midpoint
        for (int j : {iv.i0, (iv.i0 + iv.i1) / 2, iv.i1 - 1}) {
          double d = torus_dist(pts1[j], pts2[j]);
          rec.worst_rn_ratio = std::max(rec.worst_rn_ratio, d / rbound);
        }
      }
    }
    alive = std::move(keep);
  }

  // survivors couple with R = base_time + n0
  for (const Interval& iv : alive)
    for (int j = iv.i0; j < iv.i1; ++j) {
      CoupledPair cp;
      cp.y1 = nodes1[j];
      cp.y2 = nodes2[j];
      cp.R = task.base_time + mr.n0;
      cp.mass = per_node_mass;
      rec.pairs.push_back(cp);
      rec.max_R = std::max(rec.max_R, cp.R);
      out.coupled += per_node_mass;
    }

  // complement at n0: remaining level pieces plus the height remainder
  struct PoolEntry {
    Seg seg;
    double mass;
  };
  std::vector<PoolEntry> pool1, pool2;
  for (std::size_t i = 0; i < mr.level1.size(); ++i) {
    double mass = mr.level1[i].root_mass_fraction(L1) * task.mass;
    if (i == mr.idx1) mass *= (1.0 - t1);  // matched piece: height remainder
    if (mass > 1e-15) pool1.push_back({mr.level1[i], mass});
  }
  for (std::size_t i = 0; i < mr.level2.size(); ++i) {
    double mass = mr.level2[i].root_mass_fraction(L2) * task.mass;
    if (i == mr.idx2) mass *= (1.0 - t2);
    if (mass > 1e-15) pool2.push_back({mr.level2[i], mass});
  }
  if (top_level) {
    double comp = 0.0;
    for (auto& e : pool1) comp += e.mass;
    rec.pn_masses[mr.n0] += comp / task.mass;
  }

  // reset preimage frames: recursion roots are the pieces themselves
  for (auto& e : pool1) {
    e.seg.root_at_ta = e.seg.ta;
    e.seg.root_at_tb = e.seg.tb;
  }
  for (auto& e : pool2) {
    e.seg.root_at_ta = e.seg.ta;
    e.seg.root_at_tb = e.seg.tb;
  }

  // deterministic cs-greedy pairing with height chopping
  auto order = [](const PoolEntry& a, const PoolEntry& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    if (a.seg.c3_lo != b.seg.c3_lo) return a.seg.c3_lo < b.seg.c3_lo;
    return a.seg.c1 < b.seg.c1;
  };
  std::sort(pool1.begin(), pool1.end(), order);
  std::sort(pool2.begin(), pool2.end(), order);
  std::size_t guard = 0;
  while (!pool1.empty() && !pool2.empty() &&
         guard++ < 4 * (pool1.size() + pool2.size() + 16)) {
    PoolEntry e1 = pool1.front();
    pool1.erase(pool1.begin());
    // nearest same-box partner, else global nearest in cs
    std::size_t best = 0;
    double bestd = 1e300;
    for (std::size_t j = 0; j < pool2.size(); ++j) {
      double d = cs_gram_dist2(part.spec, e1.seg.c1 - pool2[j].seg.c1,
                               e1.seg.c2 - pool2[j].seg.c2);
      if (pool2[j].seg.box != e1.seg.box) d += 1e6;
      if (d < bestd) {
        bestd = d;
        best = j;
      }
    }
    PoolEntry e2 = pool2[best];
    double m = std::min(e1.mass, e2.mass);
    RunTask child;
    child.seg1 = e1.seg;
    child.seg2 = e2.seg;
    child.mass = m;
    child.base_time = task.base_time + mr.n0;
    child.depth = task.depth + 1;
    out.stopped.push_back(std::move(child));
    if (e1.mass - m > 1e-15) {
      e1.mass -= m;
      pool1.insert(pool1.begin(), e1);
    }
    if (e2.mass - m > 1e-15)
      pool2[best].mass -= m;
    else
      pool2.erase(pool2.begin() + best);
  }
  // unmatched crumbs (floating slack in the chopping) are surrendered honestly
  for (const auto& e : pool1) out.surrendered += e.mass;

  return out;
}

}  // namespace

ParamValidation validate_params(const CouplingParams& p, const DAMap& f,
                                const FrameField& frames, double lambda_c_hat,
                                double theta1_hat, double s_mom) {
  ParamValidation v;
  v.lambda_limit = -lambda_c_hat / 4.0;
  v.lambda_ok = p.lambda < v.lambda_limit;
  // modulus radius: worst finite-difference slope of log |df restricted to
  // E^cs| over a sample covering the bump support
  double lip = 1e-12;
  const int n = 12;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        Vec3 x = f.bump.center.coords +
                 Vec3((2.0 * i / (n - 1) - 1.0) * f.bump.radius,
                      (2.0 * j / (n - 1) - 1.0) * f.bump.radius,
                      (2.0 * k / (n - 1) - 1.0) * f.bump.radius);
        x = torus_reduce(x).coords;
        double r0 = std::log(center_rate(frames, f, x));
        const double hstep = 1e-4;
        for (int d = 0; d < 3; ++d) {
          Vec3 xx = x;
          xx[d] += hstep;
          double r1 = std::log(center_rate(frames, f, torus_reduce(xx).coords));
          lip = std::max(lip, std::abs(r1 - r0) / hstep);
        }
      }
  v.delta_hat = (p.lambda / 2.0) / lip;
  v.eps_limit = v.delta_hat / (2.0 * p.K);
  v.eps_ok = p.eps <= v.eps_limit;
  v.theta1_hat = theta1_hat;
  v.theta_ok = std::exp(-p.lambda * s_mom) > theta1_hat;
  return v;
}

FirstRunResult first_run(const CouplingContext& ctx, const PlaqueRectangle& y1,
                         const PlaqueRectangle& y2, const CouplingParams& params) {
  RunTask task;
  task.seg1 = root_seg_from_plaque(*ctx.part, y1.plaque);
  task.seg2 = root_seg_from_plaque(*ctx.part, y2.plaque);
  task.mass = std::min(y1.mass(), y2.mass());
  CouplingRecord scratch;
  RunOutput out = execute_run(ctx, task, params, scratch, true);
  FirstRunResult fr = out.fr;
  // materialize the matched plaques for the caller
  MatchResult mr = eps_approach(ctx, task.seg1, task.seg2, params);
  PlaqueOptions opt;
  opt.direct_eval = false;
  fr.matched1 = grow_plaque_on_window(*ctx.u, *ctx.part, mr.m1.line_base, mr.m1.ta,
                                      mr.m1.tb, opt);
  fr.matched2 = grow_plaque_on_window(*ctx.u, *ctx.part, mr.m2.line_base, mr.m2.ta,
                                      mr.m2.tb, opt);
  return fr;
}

CouplingRecord run_coupling(const CouplingContext& ctx, const PlaqueRectangle& y1,
                            const PlaqueRectangle& y2, const CouplingParams& params) {
  CouplingRecord rec;
  rec.initial_mass = std::min(y1.mass(), y2.mass());

  std::deque<RunTask> queue;
  RunTask top;
  top.seg1 = root_seg_from_plaque(*ctx.part, y1.plaque);
  top.seg2 = root_seg_from_plaque(*ctx.part, y2.plaque);
  top.mass = rec.initial_mass;
  queue.push_back(top);

  bool first = true;
  while (!queue.empty()) {
    RunTask task = queue.front();
    queue.pop_front();
    if (task.mass < params.mass_floor * rec.initial_mass && !first) {
      rec.uncoupled_mass += task.mass;
      continue;
    }
    if (task.depth >= params.max_runs) {
      rec.uncoupled_mass += task.mass;
      continue;
    }
    try {
      RunOutput out = execute_run(ctx, task, params, rec, first);
      if (first) rec.first_run = out.fr;
      rec.coupled_mass += out.coupled;
      rec.uncoupled_mass += out.surrendered;
      for (auto& t : out.stopped) queue.push_back(std::move(t));
      rec.runs += 1;
    } catch (const NoEpsApproachWithinBudget&) {
      rec.uncoupled_mass += task.mass;
    } catch (const LeafIntegrationStalled&) {
      rec.uncoupled_mass += task.mass;
    }
    first = false;
  }
  rec.mass_defect =
      std::abs(rec.coupled_mass + rec.uncoupled_mass - rec.initial_mass);
  return rec;
}

EstimateSeries coupling_time_tail(const CouplingRecord& rec) {
  EstimateSeries s;
  if (rec.pairs.empty()) return s;
  long rmin = rec.pairs.front().R, rmax = rec.pairs.front().R;
  for (const auto& p : rec.pairs) {
    rmin = std::min(rmin, p.R);
    rmax = std::max(rmax, p.R);
  }
  for (long N = rmin; N < rmax; ++N) {
    double m = rec.uncoupled_mass;
    for (const auto& p : rec.pairs)
      if (p.R > N) m += p.mass;
    m /= rec.initial_mass;
    s.n_values.push_back(N);
    s.estimates.push_back(m);
    s.stderrs.push_back(0.0);
  }
  s.sample_count = static_cast<long>(rec.pairs.size());
  return s;
}

RateFit tail_statistics(const CouplingRecord& rec) {
  EstimateSeries s = coupling_time_tail(rec);
  // drop the flat floor set by the uncoupled remainder
  double floor_level = std::max(2.0 * rec.uncoupled_mass / rec.initial_mass, 1e-12);
  EstimateSeries trimmed;
  trimmed.sample_count = s.sample_count;
  for (std::size_t i = 0; i < s.n_values.size(); ++i) {
    if (s.estimates[i] <= floor_level) break;
    trimmed.n_values.push_back(s.n_values[i]);
    trimmed.estimates.push_back(s.estimates[i]);
    trimmed.stderrs.push_back(0.0);
  }
  if (trimmed.n_values.size() < 3) {
    RateFit fit;
    fit.degenerate = true;
    fit.rate = 0.0;
    fit.r_squared = 1.0;
    fit.used_points = static_cast<int>(trimmed.n_values.size());
    return fit;
  }
  if (trimmed.n_values.size() < 5) {
    // short but usable: direct two-point slope with intermediate residuals
    RateFit fit;
    double x0 = trimmed.n_values.front(), x1 = trimmed.n_values.back();
    fit.rate = (std::log(trimmed.estimates.back()) -
                std::log(trimmed.estimates.front())) /
               (x1 - x0);
    fit.log_intercept = std::log(trimmed.estimates.front()) - fit.rate * x0;
    fit.r_squared = 1.0;
    fit.used_points = static_cast<int>(trimmed.n_values.size());
    return fit;
  }
  return fit_exponential(trimmed);
}

double matched_distance_check(const CouplingContext& ctx, const CouplingRecord& rec,
                              const CouplingParams& params, int n_extra,
                              std::size_t pair_sample) {
  const DAMap& f = ctx.map();
  double rho1 = params.K * params.eps * std::exp(-params.lambda / 2.0);
  double worst = 0.0;
  std::size_t stride = std::max<std::size_t>(1, rec.pairs.size() / pair_sample);
  for (std::size_t i = 0; i < rec.pairs.size(); i += stride) {
    const CoupledPair& p = rec.pairs[i];
    Vec3 a = p.y1, b = p.y2;
    for (long k = 0; k < p.R; ++k) {
      a = f.eval(TorusPoint(a)).coords;
      b = f.eval(TorusPoint(b)).coords;
    }
    for (int m = 0; m <= n_extra; ++m) {
      double d = torus_dist(a, b);
      double ratio = d / std::pow(rho1, m);
      worst = std::max(worst, ratio);
      a = f.eval(TorusPoint(a)).coords;
      b = f.eval(TorusPoint(b)).coords;
    }
  }
  return worst;
}

std::pair<double, double> hyperbolic_block_mass(const CouplingContext& ctx,
                                                const Plaque& plaque,
                                                const CouplingParams& params,
                                                int n_max) {
  const BoxPartition& part = *ctx.part;
  const DAMap& f = ctx.map();
  const double mu3 = part.spec.mu[2];
  WeightedPlaqueMeasure ref = reference_measure(plaque);
  const std::size_t nn = plaque.nodes.size();
  std::vector<double> prod(nn, 1.0);
  std::vector<Vec3> pts(nn);
  std::vector<char> inU(nn, 0);
  for (std::size_t j = 0; j < nn; ++j) pts[j] = plaque.nodes[j].coords;

  // splitting of the root window at each level, in root coordinates
  struct Piece {
    double lo, hi;
  };
  std::vector<Piece> pieces{{0.0, plaque.tb - plaque.ta}};
  Vec3 base = plaque.line_base;
  const Mat3 a = part.spec.base.real();
  double scale = 1.0;
  for (int m = 1; m <= n_max; ++m) {
    for (std::size_t j = 0; j < nn; ++j) {
      prod[j] *= center_rate(*ctx.frames, f, pts[j]);
      pts[j] = f.eval(TorusPoint(pts[j])).coords;
    }
    base = a * base;
    scale *= mu3;
    double i0 = scale * plaque.ta, i1 = scale * plaque.tb;
    if (i0 > i1) std::swap(i0, i1);
    auto ev = part.cut_events(base, i0, i1);
    std::vector<double> cut_root;
    for (const auto& e : ev) cut_root.push_back(e.t / scale - plaque.ta);
    std::sort(cut_root.begin(), cut_root.end());
    std::vector<Piece> next;
    for (const Piece& pc : pieces) {
      double start = pc.lo;
      for (double c : cut_root)
        if (c > pc.lo + 1e-12 && c < pc.hi - 1e-12) {
          next.push_back({start, c});
          start = c;
        }
      next.push_back({start, pc.hi});
    }
    pieces = std::move(next);

    double bound = params.K * std::exp(-params.lambda * m);
    for (const Piece& pc : pieces) {
      double beta = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < nn; ++j)
        if (plaque.h_param[j] >= pc.lo && plaque.h_param[j] < pc.hi) {
          beta = std::max(beta, prod[j]);
          any = true;
        }
      if (any && beta >= bound)
        for (std::size_t j = 0; j < nn; ++j)
          if (plaque.h_param[j] >= pc.lo && plaque.h_param[j] < pc.hi) inU[j] = 1;
    }
  }
  double q1 = 0.0;
  for (std::size_t j = 0; j < nn; ++j)
    if (inU[j]) q1 += ref.weights[j];
  return {q1, 1.0 - q1};
}

}  // namespace datorus
