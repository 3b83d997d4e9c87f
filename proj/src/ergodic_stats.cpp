#include "datorus/ergodic_stats.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

#include "datorus/parallel.hpp"
#include "datorus/rng.hpp"

namespace datorus {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double interp_grid(const std::vector<double>& v, int n, const Vec3& x) {
  Vec3 g = Vec3(frac_unit(x[0]), frac_unit(x[1]), frac_unit(x[2])) * n;
  int i0[3], i1[3];
  double w[3];
  for (int d = 0; d < 3; ++d) {
    double fl = std::floor(g[d]);
    w[d] = g[d] - fl;
    int b = static_cast<int>(fl) % n;
    if (b < 0) b += n;
    i0[d] = b;
    i1[d] = (b + 1) % n;
  }
  auto at = [&](int a, int b, int c) {
    return v[static_cast<std::size_t>(a) +
             static_cast<std::size_t>(n) *
                 (static_cast<std::size_t>(b) + static_cast<std::size_t>(n) * c)];
  };
  double acc = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        acc += ((a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) *
                (c ? w[2] : 1 - w[2])) *
               at(a ? i1[0] : i0[0], b ? i1[1] : i0[1], c ? i1[2] : i0[2]);
  return acc;
}

}  // namespace

double ObservableSpec::eval(const Vec3& x) const {
  switch (kind) {
    case Kind::Character: {
      double phase = freq[0] * x[0] + freq[1] * x[1] + freq[2] * x[2];
      return std::cos(kTwoPi * phase) + shift;
    }
    case Kind::Cusp:
      return std::pow(torus_dist(x, center.coords), holder_exp) + shift;
    case Kind::NodeGrid:
      return interp_grid(grid_values, grid_n, x) + shift;
  }
  return shift;
}

double ObservableSpec::sup_norm() const {
  switch (kind) {
    case Kind::Character:
      return 1.0 + std::abs(shift);
    case Kind::Cusp:
      return std::pow(std::sqrt(3.0) / 2.0, holder_exp) + std::abs(shift);
    case Kind::NodeGrid: {
      double m = 0.0;
      for (double v : grid_values) m = std::max(m, std::abs(v));
      return m + std::abs(shift);
    }
  }
  return 0.0;
}

ObservableSpec character_observable(const Vec3i& k, double gamma) {
  ObservableSpec o;
  o.kind = ObservableSpec::Kind::Character;
  o.freq = k;
  o.holder_exp = gamma;
  double kn = std::sqrt(static_cast<double>(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
  o.holder_norm = 1.0 + std::pow(2.0, 1.0 - gamma) * std::pow(kTwoPi * kn, gamma);
  return o;
}

ObservableSpec cusp_observable(const TorusPoint& center, double gamma) {
  ObservableSpec o;
  o.kind = ObservableSpec::Kind::Cusp;
  o.center = center;
  o.holder_exp = gamma;
  o.holder_norm = std::pow(std::sqrt(3.0) / 2.0, gamma) + 1.0;
  return o;
}

ObservableSpec grid_observable(int grid_n, std::vector<double> values, double gamma) {
  ObservableSpec o;
  o.kind = ObservableSpec::Kind::NodeGrid;
  o.grid_n = grid_n;
  o.grid_values = std::move(values);
  o.holder_exp = gamma;
  // empirical bound: max adjacent-node quotient at grid scale
  double q = 0.0;
  double h = 1.0 / grid_n;
  for (int z = 0; z < grid_n; ++z)
    for (int y = 0; y < grid_n; ++y)
      for (int x = 0; x < grid_n; ++x) {
        auto at = [&](int a, int b, int c) {
          return o.grid_values[static_cast<std::size_t>((a + grid_n) % grid_n) +
                               static_cast<std::size_t>(grid_n) *
                                   (static_cast<std::size_t>((b + grid_n) % grid_n) +
                                    static_cast<std::size_t>(grid_n) *
                                        ((c + grid_n) % grid_n))];
        };
        double base = at(x, y, z);
        q = std::max({q, std::abs(at(x + 1, y, z) - base),
                      std::abs(at(x, y + 1, z) - base),
                      std::abs(at(x, y, z + 1) - base)});
      }
  o.holder_norm = o.sup_norm() + q / std::pow(h, gamma);
  return o;
}

SampleSet sample_nu_f(const DisplacementField& u, long count, std::uint64_t seed,
                      std::int64_t lattice_q, double drop_limit) {
  SampleSet s;
  s.seed = seed;
  s.lattice.resize(count);
  s.preimages.resize(count);
  s.converged.assign(count, 0);
  std::uint64_t q = static_cast<std::uint64_t>(lattice_q);
  parallel_chunks(static_cast<std::size_t>(count), 4096,
                  [&](std::size_t lo, std::size_t hi) {
    for (std::size_t m = lo; m < hi; ++m) {
      CounterRng rng(seed, m);
      Vec3i num(static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)));
      s.lattice[m] = make_lattice_point(num, lattice_q);
      InversionResult inv = try_invert_h(u, s.lattice[m].point());
      s.preimages[m] = inv.y;
      s.converged[m] = inv.converged ? 1 : 0;
    }
  });
  long drops = 0;
  for (char c : s.converged)
    if (!c) ++drops;
  s.drop_rate = static_cast<double>(drops) / static_cast<double>(count);
  if (s.drop_rate > drop_limit)
    throw ExcessiveDropRate("inversion drop rate " + std::to_string(s.drop_rate));
  return s;
}

ExponentEstimate orbit_exponent(const DAMap& f, const FrameField& frames,
                                const SampleSet& samples, int n_orbit, int family) {
  const std::size_t count = samples.preimages.size();
  std::vector<double> vals(count, 0.0);
  std::vector<char> used(count, 0);
  parallel_chunks(count, 1024, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t m = lo; m < hi; ++m) {
      if (!samples.converged[m]) continue;
      Vec3 y = samples.preimages[m].coords;
      double acc = 0.0;
      for (int k = 0; k < n_orbit; ++k) {
        Vec3 r = family_rates(frames, f, y);
        acc += std::log(r[family]);
        y = f.eval(TorusPoint(y)).coords;
      }
      vals[m] = acc / n_orbit;
      used[m] = 1;
    }
  });
  std::vector<double> kept;
  kept.reserve(count);
  for (std::size_t m = 0; m < count; ++m)
    if (used[m]) kept.push_back(vals[m]);
  ExponentEstimate e;
  e.samples = static_cast<long>(kept.size());
  if (kept.empty()) return e;
  double mean = pairwise_sum(kept) / kept.size();
  std::vector<double> sq(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    sq[i] = (kept[i] - mean) * (kept[i] - mean);
  double var = pairwise_sum(sq) / std::max<std::size_t>(1, kept.size() - 1);
  e.value = mean;
  e.stderr_ = std::sqrt(var / kept.size());
  return e;
}

std::pair<double, double> mostly_contracting_check(
    const DAMap& f, const FrameField& frames,
    const std::vector<WeightedPlaqueMeasure>& plaques, int n) {
  double worst = -1e300;
  for (const auto& l : plaques) {
    double integral = 0.0;
    for (std::size_t j = 0; j < l.weights.size(); ++j) {
      Vec3 y = l.plaque.nodes[j].coords;
      double acc = 0.0;
      for (int k = 0; k < n * f.power; ++k) {
        acc += std::log(center_rate(frames, f, y));
        y = f.eval(TorusPoint(y)).coords;
      }
      integral += l.weights[j] * acc;
    }
    worst = std::max(worst, integral);
  }
  return {worst, -worst};
}

double birkhoff_sum(const DAMap& f, const ObservableSpec& phi, const TorusPoint& y,
                    long n) {
  Vec3 x = y.coords;
  double s = 0.0;
  for (long k = 0; k < n; ++k) {
    s += phi.eval(x);
    for (int p = 0; p < f.power; ++p) x = f.eval(TorusPoint(x)).coords;
  }
  return s;
}

EstimateSeries correlation_series(const DisplacementField& u, const ObservableSpec& phi,
                                  const ObservableSpec& psi, int n_max, long count,
                                  std::uint64_t seed, std::int64_t lattice_q) {
  const IntegerAutomorphism& A = u.map().spectral.base;
  const int power = u.map().power;
  const std::uint64_t q = static_cast<std::uint64_t>(lattice_q);
  const int nn = n_max + 1;

  struct Acc {
    std::vector<double> sum_phi, sum_prod, sum_prod2;
    double sum_psi = 0.0;
    long used = 0, dropped = 0;
    explicit Acc(int nn) : sum_phi(nn, 0.0), sum_prod(nn, 0.0), sum_prod2(nn, 0.0) {}
  };

  const std::size_t chunk = 4096;
  const std::size_t nchunks = (static_cast<std::size_t>(count) + chunk - 1) / chunk;
  std::vector<Acc> per_chunk(nchunks, Acc(nn));

  parallel_chunks(static_cast<std::size_t>(count), chunk,
                  [&](std::size_t lo, std::size_t hi) {
    Acc& acc = per_chunk[lo / chunk];
    for (std::size_t m = lo; m < hi; ++m) {
      CounterRng rng(seed, m);
      Vec3i num(static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)));
      LatticePoint x = make_lattice_point(num, lattice_q);
      InversionResult y0 = try_invert_h(u, x.point());
      if (!y0.converged) {
        acc.dropped++;
        continue;
      }
      double psi0 = psi.eval(y0.y.coords);
      std::vector<double> phis(nn);
      bool ok = true;
      LatticePoint xc = x;
      phis[0] = phi.eval(y0.y.coords);
      for (int n = 1; n < nn && ok; ++n) {
        xc = apply_auto(A, xc, power);
        InversionResult yn = try_invert_h(u, xc.point());
        if (!yn.converged) {
          ok = false;
          break;
        }
        phis[n] = phi.eval(yn.y.coords);
      }
      if (!ok) {
        acc.dropped++;
        continue;
      }
      acc.used++;
      acc.sum_psi += psi0;
      for (int n = 0; n < nn; ++n) {
        acc.sum_phi[n] += phis[n];
        double p = phis[n] * psi0;
        acc.sum_prod[n] += p;
        acc.sum_prod2[n] += p * p;
      }
    }
  });

  Acc total(nn);
  for (const auto& a : per_chunk) {
    total.used += a.used;
    total.dropped += a.dropped;
    total.sum_psi += a.sum_psi;
    for (int n = 0; n < nn; ++n) {
      total.sum_phi[n] += a.sum_phi[n];
      total.sum_prod[n] += a.sum_prod[n];
      total.sum_prod2[n] += a.sum_prod2[n];
    }
  }
  double drop_rate = static_cast<double>(total.dropped) / std::max<long>(1, count);
  if (drop_rate > 0.01)
    throw ExcessiveDropRate("correlation sampling drop rate " +
                            std::to_string(drop_rate));

  EstimateSeries out;
  out.sample_count = total.used;
  out.seed = seed;
  const double M = static_cast<double>(total.used);
  double psi_mean = total.sum_psi / M;
  for (int n = 1; n < nn; ++n) {
    double prod_mean = total.sum_prod[n] / M;
    double phi_mean = total.sum_phi[n] / M;
    double est = prod_mean - phi_mean * psi_mean;
    double var = total.sum_prod2[n] / M - prod_mean * prod_mean;
    out.n_values.push_back(n);
    out.estimates.push_back(est);
    out.stderrs.push_back(std::sqrt(std::max(0.0, var) / M));
  }
  return out;
}

RateFit fit_exponential(const EstimateSeries& series, long fit_lo, long fit_hi) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < series.n_values.size(); ++i) {
    long n = series.n_values[i];
    if (n < fit_lo || n > fit_hi) continue;
    double e = std::abs(series.estimates[i]);
    if (e <= 3.0 * series.stderrs[i] || e <= 0.0) continue;  // noise floor rule
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(e));
  }
  if (xs.size() < 5)
    throw InsufficientSignal("only " + std::to_string(xs.size()) +
                             " entries above the noise floor");
  double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  RateFit fit;
  fit.rate = (n * sxy - sx * sy) / denom;
  fit.log_intercept = (sy - fit.rate * sx) / n;
  double ss_tot = syy - sy * sy / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.log_intercept + fit.rate * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
  fit.fit_lo = static_cast<long>(xs.front());
  fit.fit_hi = static_cast<long>(xs.back());
  fit.used_points = static_cast<int>(xs.size());
  return fit;
}

EstimateSeries deviation_tail(const DisplacementField& u, const ObservableSpec& phi,
                              double eps, const std::vector<long>& n_list, long count,
                              std::uint64_t seed, std::int64_t lattice_q) {
  const IntegerAutomorphism& A = u.map().spectral.base;
  const int power = u.map().power;
  const std::uint64_t q = static_cast<std::uint64_t>(lattice_q);
  long n_max = 0;
  for (long n : n_list) n_max = std::max(n_max, n);

  // first pass: estimate the nu_f mean of phi so the observable is centered
  const long mean_count = std::min<long>(count, 200000);
  std::vector<double> mvals(mean_count, 0.0);
  std::vector<char> mok(mean_count, 0);
  parallel_chunks(static_cast<std::size_t>(mean_count), 4096,
                  [&](std::size_t lo, std::size_t hi) {
    for (std::size_t m = lo; m < hi; ++m) {
      CounterRng rng(seed ^ 0x9E3779B97F4A7C15ull, m);
      Vec3i num(static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)));
      InversionResult y = try_invert_h(u, make_lattice_point(num, lattice_q).point());
      if (y.converged) {
        mvals[m] = phi.eval(y.y.coords);
        mok[m] = 1;
      }
    }
  });
  std::vector<double> kept;
  for (long m = 0; m < mean_count; ++m)
    if (mok[m]) kept.push_back(mvals[m]);
  double mean = kept.empty() ? 0.0 : pairwise_sum(kept) / kept.size();

  const std::size_t chunk = 4096;
  const std::size_t nchunks = (static_cast<std::size_t>(count) + chunk - 1) / chunk;
  std::vector<std::vector<long>> exceed(nchunks, std::vector<long>(n_list.size(), 0));
  std::vector<long> used(nchunks, 0);

  parallel_chunks(static_cast<std::size_t>(count), chunk,
                  [&](std::size_t lo, std::size_t hi) {
    std::size_t ci = lo / chunk;
    for (std::size_t m = lo; m < hi; ++m) {
      CounterRng rng(seed, m);
      Vec3i num(static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)),
                static_cast<std::int64_t>(rng.next_below(q)));
      LatticePoint x = make_lattice_point(num, lattice_q);
      double s = 0.0;
      bool ok = true;
      LatticePoint xc = x;
      std::size_t check = 0;
      for (long k = 0; k < n_max && ok && check < n_list.size(); ++k) {
        InversionResult y = try_invert_h(u, xc.point());
        if (!y.converged) {
          ok = false;
          break;
        }
        s += phi.eval(y.y.coords) - mean;
        xc = apply_auto(A, xc, power);
        while (check < n_list.size() && n_list[check] == k + 1) {
          if (std::abs(s) > eps * (k + 1)) exceed[ci][check] += 1;
          ++check;
        }
      }
      if (ok) used[ci] += 1;
    }
  });

  long total_used = 0;
  std::vector<long> total_exceed(n_list.size(), 0);
  for (std::size_t c = 0; c < nchunks; ++c) {
    total_used += used[c];
    for (std::size_t i = 0; i < n_list.size(); ++i) total_exceed[i] += exceed[c][i];
  }

  EstimateSeries out;
  out.sample_count = total_used;
  out.seed = seed;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    double p = static_cast<double>(total_exceed[i]) / std::max<long>(1, total_used);
    out.n_values.push_back(n_list[i]);
    out.estimates.push_back(p);
    out.stderrs.push_back(std::sqrt(p * (1.0 - p) / std::max<long>(1, total_used)));
  }
  return out;
}

MomentBoundResult moment_bound_check(const DisplacementField& u, const FrameField& frames,
                                     const BoxPartition& part, const Plaque& plaque,
                                     const ObservableSpec& phi, double s_mom, int n,
                                     int max_leaves) {
  const DAMap& f = u.map();
  const double mu3 = part.spec.mu[2];
  const int steps = n * f.power;

  struct Leaf {
    Vec3 line_base;  // current image line
    double ta, tb;   // window on that line
    double root_lo, root_hi;  // preimage interval in the root plaque (relative)
  };
  std::vector<Leaf> level{{plaque.line_base, plaque.ta, plaque.tb, 0.0,
                           plaque.tb - plaque.ta}};
  const Mat3 a = part.spec.base.real();
  for (int step = 0; step < steps; ++step) {
    std::vector<Leaf> next;
    for (const Leaf& lf : level) {
      Vec3 base2 = a * lf.line_base;
      double i0 = mu3 * lf.ta, i1 = mu3 * lf.tb;
      if (i0 > i1) std::swap(i0, i1);
      auto ev = part.cut_events(base2, i0, i1);
      std::vector<double> cuts{i0};
      for (auto& e : ev) cuts.push_back(e.t);
      cuts.push_back(i1);
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double clo = cuts[k], chi = cuts[k + 1];
        if (chi - clo < 1e-11) continue;
        double plo = clo / mu3, phi_ = chi / mu3;
        if (plo > phi_) std::swap(plo, phi_);
        // map preimage interval through the parent's own root interval
        double span = lf.tb - lf.ta;
        double rlo = lf.root_lo + (plo - lf.ta) / span * (lf.root_hi - lf.root_lo);
        double rhi = lf.root_lo + (phi_ - lf.ta) / span * (lf.root_hi - lf.root_lo);
        next.push_back({base2, clo, chi, rlo, rhi});
      }
      if (static_cast<int>(next.size()) > max_leaves)
        throw TreeTooLarge("transfer tree exceeded " + std::to_string(max_leaves) +
                           " leaves");
    }
    level = std::move(next);
  }

  MomentBoundResult res;
  res.leaves = static_cast<int>(level.size());
  double L = plaque.tb - plaque.ta;
  double lhs = 0.0, norm_lhs = 0.0;
  PlaqueOptions opt;
  for (const Leaf& lf : level) {
    double cj = (lf.root_hi - lf.root_lo) / L;
    const int probes = 7;
    double smax = -1e300, rmax = -1e300;
    Vec3 guess = plaque.nodes[std::min(
        plaque.nodes.size() - 1,
        static_cast<std::size_t>((0.5 * (lf.root_lo + lf.root_hi)) /
                                 std::max(1e-12, plaque.h_param[1])))].coords;
    for (int p = 0; p < probes; ++p) {
      double t = lf.root_lo + (lf.root_hi - lf.root_lo) * (p + 0.5) / probes;
      TorusPoint y =
          invert_on_unstable_line(u, plaque.line_base, plaque.ta + t, guess, opt);
      guess = y.coords;
      // S_n of phi over f^power-steps, and the center-rate product
      Vec3 x = y.coords;
      double s = 0.0, lograte = 0.0;
      for (int k = 0; k < n; ++k) {
        s += phi.eval(x);
        for (int pw = 0; pw < f.power; ++pw) {
          lograte += std::log(center_rate(frames, f, x));
          x = f.eval(TorusPoint(x)).coords;
        }
      }
      smax = std::max(smax, s);
      rmax = std::max(rmax, lograte);
    }
    lhs += cj * std::exp(s_mom * smax);
    norm_lhs += cj * std::exp(rmax);
  }
  res.lhs = lhs;
  res.norm_lhs = norm_lhs;
  return res;
}

double plaque_birkhoff_mean(const DAMap& f, const WeightedPlaqueMeasure& l,
                            const ObservableSpec& phi, long n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < l.weights.size(); ++j)
    acc += l.weights[j] * birkhoff_sum(f, phi, l.plaque.nodes[j], n);
  return acc;
}

double oscillation_check(const DisplacementField& u, const BoxPartition& part,
                         const Plaque& plaque, const ObservableSpec& phi, int n,
                         int probe_points) {
  // the n-step preimage piece of the plaque through its base: pull the window
  // back by A^n along the unstable line and sample S_n there
  const DAMap& f = u.map();
  const double mu3 = part.spec.mu[2];
  const Vec3 e3 = part.spec.frame.col(2);
  const int steps = n * f.power;
  Mat3i ainv_i = part.spec.base.inverse_entries();
  Mat3 ainv = ainv_i.cast<double>();
  Vec3 base = plaque.line_base;
  double ta = plaque.ta, tb = plaque.tb;
  for (int k = 0; k < steps; ++k) {
    base = ainv * base;
    ta /= mu3;
    tb /= mu3;
    if (ta > tb) std::swap(ta, tb);
  }
  PlaqueOptions opt;
  double smin = 1e300, smax = -1e300;
  Vec3 guess = torus_reduce(base + 0.5 * (ta + tb) * e3).coords;
  for (int p = 0; p < probe_points; ++p) {
    double t = ta + (tb - ta) * (p + 0.5) / probe_points;
    TorusPoint y = invert_on_unstable_line(u, base, t, guess, opt);
    guess = y.coords;
    double s = birkhoff_sum(f, phi, y, n);
    smin = std::min(smin, s);
    smax = std::max(smax, s);
  }
  return smax - smin;
}

}  // namespace datorus
