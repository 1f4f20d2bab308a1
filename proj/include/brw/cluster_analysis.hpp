#pragma once

#include "simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace brw {

// Linear-interpolation quantile (R type 7); NaN for an empty sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Quartiles {
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
};

template <class Int>
Quartiles quartiles(const std::vector<Int>& xs) {
  std::vector<double> v(xs.begin(), xs.end());
  return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

// ---------------------------------------------------------------------------
// Survival and conditional growth of the subpopulation of one initial particle

struct SurvivalPoint {
  double t = 0;
  std::size_t survivors = 0;
  double p = 0;
  double se = 0;
};

struct ConditionalMeanPoint {
  double t = 0;
  std::size_t survivors = 0;
  double mean = 0;
  double se = 0;
  bool omitted = false;  // no survivors at this time
};

// binomial estimate with its standard error
inline SurvivalPoint survival_point(double t, std::size_t survivors, std::size_t n) {
  SurvivalPoint sp;
  sp.t = t;
  sp.survivors = survivors;
  if (n == 0) return sp;
  sp.p = static_cast<double>(survivors) / static_cast<double>(n);
  sp.se = std::sqrt(sp.p * (1.0 - sp.p) / static_cast<double>(n));
  return sp;
}

struct LineageStudy {
  std::size_t n_replicas = 0;
  std::size_t n_failed = 0;
  std::vector<SurvivalPoint> survival;
  double c_hat = std::numeric_limits<double>::quiet_NaN();  // fitted t * P(t)
  std::array<std::vector<ConditionalMeanPoint>, 2> conditional;  // by counted type
  std::array<double, 2> slope{std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN()};
  std::string warning;
};

struct LineageOptions {
  std::size_t event_cap = default_event_cap;
  unsigned threads = default_threads();
};

namespace detail {

// indices of the largest half of the times (at least one)
inline std::vector<std::size_t> largest_half(const std::vector<double>& ts) {
  std::vector<std::size_t> idx(ts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return ts[a] < ts[b]; });
  const std::size_t keep = std::max<std::size_t>(1, (ts.size() + 1) / 2);
  return {idx.end() - static_cast<std::ptrdiff_t>(keep), idx.end()};
}

}  // namespace detail

// One pass over n replicas started from a single type-i particle at the
// origin: survival of the whole subpopulation and, on survival, the total
// count of each type.
inline LineageStudy lineage_study(const TwoTypeModel& model, int initial_type, const std::vector<double>& t_list,
                                  std::size_t n_replicas, std::uint64_t seed, const LineageOptions& opt = {}) {
  detail::require(initial_type == 1 || initial_type == 2, "initial type must be 1 or 2");
  detail::require(n_replicas >= 100, "at least 100 replicas are required for a survival estimate");
  detail::require(!t_list.empty(), "t_list is empty");
  for (double t : t_list) detail::require(t >= 0.0 && std::isfinite(t), "t_list entries must be finite and >= 0");
  const double horizon = std::max(*std::max_element(t_list.begin(), t_list.end()), 1e-12);

  LineageStudy st;
  st.n_replicas = n_replicas;
  const auto crit = classify_criticality(model.constants(), model.law());
  if (crit.regime != Criticality::Regime::critical || !crit.irreducible)
    st.warning = std::string("law is ") + to_string(crit.regime) + (crit.irreducible ? "" : ", reducible") +
                 "; the c/t survival law assumes a critical irreducible law";

  const std::vector<InitialParticle> init{{initial_type, origin(model.dim())}};
  const auto per = ensemble_map(
      model, horizon, init, n_replicas, seed,
      [&](const SimulationRun& r) {
        std::vector<std::array<std::int64_t, 2>> tot;
        for (double t : t_list) tot.push_back(alive_totals(r, t));
        return tot;
      },
      opt.event_cap, opt.threads);

  std::vector<const std::vector<std::array<std::int64_t, 2>>*> ok;
  for (const auto& p : per) {
    if (p.value) ok.push_back(&*p.value);
    else ++st.n_failed;
  }
  for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
    SurvivalPoint sp;
    sp.t = t_list[ti];
    std::array<double, 2> s{0, 0}, s2{0, 0};
    for (const auto* v : ok) {
      const auto& c = (*v)[ti];
      if (c[0] + c[1] > 0) {
        ++sp.survivors;
        for (int j = 0; j < 2; ++j) {
          s[j] += static_cast<double>(c[j]);
          s2[j] += static_cast<double>(c[j]) * static_cast<double>(c[j]);
        }
      }
    }
    sp = survival_point(sp.t, sp.survivors, ok.size());
    st.survival.push_back(sp);
    for (int j = 0; j < 2; ++j) {
      ConditionalMeanPoint cp;
      cp.t = sp.t;
      cp.survivors = sp.survivors;
      if (sp.survivors == 0) {
        cp.omitted = true;
      } else {
        const double m = static_cast<double>(sp.survivors);
        cp.mean = s[j] / m;
        if (sp.survivors > 1)
          cp.se = std::sqrt(std::max(0.0, (s2[j] - m * cp.mean * cp.mean) / (m - 1.0)) / m);
      }
      st.conditional[j].push_back(cp);
    }
  }

  const auto top = detail::largest_half(t_list);
  double acc = 0.0;
  for (auto i : top) acc += st.survival[i].t * st.survival[i].p;
  st.c_hat = acc / static_cast<double>(top.size());
  for (int j = 0; j < 2; ++j) {
    double num = 0.0, den = 0.0;
    for (auto i : top) {
      const auto& cp = st.conditional[j][i];
      if (cp.omitted) continue;
      num += cp.t * cp.mean;
      den += cp.t * cp.t;
    }
    if (den > 0) st.slope[j] = num / den;
  }
  return st;
}

struct SurvivalCurve {
  std::vector<SurvivalPoint> points;
  double c_hat = 0;
  std::string warning;
};

inline SurvivalCurve survival_curve(const TwoTypeModel& model, int initial_type, const std::vector<double>& t_list,
                                    std::size_t n_replicas, std::uint64_t seed, const LineageOptions& opt = {}) {
  auto st = lineage_study(model, initial_type, t_list, n_replicas, seed, opt);
  return {std::move(st.survival), st.c_hat, std::move(st.warning)};
}

struct ConditionalMeanCurve {
  std::vector<ConditionalMeanPoint> points;
  double slope = 0;
  std::string warning;
};

// mean total type-j count among replicas whose subpopulation survives
inline ConditionalMeanCurve conditional_mean_curve(const TwoTypeModel& model, int i, int j,
                                                   const std::vector<double>& t_list, std::size_t n_replicas,
                                                   std::uint64_t seed, const LineageOptions& opt = {}) {
  detail::require(j == 1 || j == 2, "counted type must be 1 or 2");
  auto st = lineage_study(model, i, t_list, n_replicas, seed, opt);
  return {std::move(st.conditional[j - 1]), st.slope[j - 1], std::move(st.warning)};
}

// ---------------------------------------------------------------------------
// d = 1 clusters and gaps

struct ClusterReport {
  double t = 0;
  std::vector<std::int64_t> cluster_lengths;
  std::vector<std::int64_t> gap_lengths;
  std::int64_t left_boundary = 0;   // empty run before the first cluster
  std::int64_t right_boundary = 0;  // empty run after the last cluster
  Quartiles clusters;
  Quartiles gaps;
};

enum class ClusterUnit {
  sites,     // maximal runs of occupied sites
  lineages,  // merged spans of the live particles of each surviving subpopulation
};

struct ClusterOptions {
  int gap_tolerance = 1;  // clusters separated by fewer empty sites are merged
  int type = 0;           // 0: both types, else only this type
  ClusterUnit unit = ClusterUnit::sites;
};

namespace detail {

// Intervals [a, b] sorted by a, merged when fewer than gap_tolerance empty
// sites separate them, clipped to the window.
inline ClusterReport report_from_intervals(std::vector<std::pair<std::int64_t, std::int64_t>> iv, std::int64_t x_lo,
                                           std::int64_t x_hi, int gap_tolerance) {
  require(x_lo <= x_hi, "cluster window is empty");
  require(gap_tolerance >= 1, "gap tolerance must be >= 1");
  std::sort(iv.begin(), iv.end());
  ClusterReport rep;
  std::vector<std::pair<std::int64_t, std::int64_t>> runs;
  for (auto [a, b] : iv) {
    a = std::max(a, x_lo);
    b = std::min(b, x_hi);
    if (a > b) continue;
    if (!runs.empty() && a - runs.back().second - 1 < gap_tolerance) runs.back().second = std::max(runs.back().second, b);
    else runs.emplace_back(a, b);
  }
  const std::int64_t window = x_hi - x_lo + 1;
  if (runs.empty()) {
    rep.left_boundary = window;
  } else {
    rep.left_boundary = runs.front().first - x_lo;
    rep.right_boundary = x_hi - runs.back().second;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      rep.cluster_lengths.push_back(runs[k].second - runs[k].first + 1);
      if (k + 1 < runs.size()) rep.gap_lengths.push_back(runs[k + 1].first - runs[k].second - 1);
    }
  }
  rep.clusters = quartiles(rep.cluster_lengths);
  rep.gaps = quartiles(rep.gap_lengths);
  return rep;
}

}  // namespace detail

// Window [x_lo, x_hi] inclusive; occupied sites outside it are ignored.
inline ClusterReport cluster_stats_1d(const std::set<std::int64_t>& occupied, std::int64_t x_lo, std::int64_t x_hi,
                                      const ClusterOptions& opt = {}) {
  std::vector<std::pair<std::int64_t, std::int64_t>> iv;
  for (auto x : occupied) iv.emplace_back(x, x);
  return detail::report_from_intervals(std::move(iv), x_lo, x_hi, opt.gap_tolerance);
}

inline ClusterReport cluster_stats_1d(const Snapshot& snap, std::int64_t x_lo, std::int64_t x_hi,
                                      const ClusterOptions& opt = {}) {
  std::set<std::int64_t> occ;
  for (const auto& [key, count] : snap) {
    detail::require(key.second.size() == 1, "cluster_stats_1d needs a one-dimensional snapshot");
    if (count > 0 && (opt.type == 0 || key.first == opt.type)) occ.insert(key.second[0]);
  }
  return cluster_stats_1d(occ, x_lo, x_hi, opt);
}

// [min, max] position of the live particles of each initial particle's
// subpopulation at t, in order of the initial particles; extinct ones are skipped.
inline std::vector<std::pair<std::int64_t, std::int64_t>> lineage_spans(const SimulationRun& run, double t,
                                                                        int type = 0) {
  const auto& h = run.history;
  std::vector<std::size_t> root(h.size());
  std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> span;
  for (std::size_t id = 0; id < h.size(); ++id) {
    detail::require(h[id].x.size() == 1, "lineage_spans needs a one-dimensional run");
    root[id] = h[id].parent < 0 ? id : root[static_cast<std::size_t>(h[id].parent)];
    if (!h[id].alive_at(t, run.horizon) || (type != 0 && h[id].type != type)) continue;
    const std::int64_t x = h[id].x[0];
    auto [it, fresh] = span.try_emplace(root[id], x, x);
    it->second.first = std::min(it->second.first, x);
    it->second.second = std::max(it->second.second, x);
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (const auto& [r, s] : span) out.push_back(s);
  return out;
}

// Cluster statistics of a run at t in the unit chosen by opt.
inline ClusterReport cluster_stats_1d(const SimulationRun& run, double t, std::int64_t x_lo, std::int64_t x_hi,
                                      const ClusterOptions& opt = {}) {
  auto rep = opt.unit == ClusterUnit::sites
                 ? cluster_stats_1d(snapshot(run, t), x_lo, x_hi, opt)
                 : detail::report_from_intervals(lineage_spans(run, t, opt.type), x_lo, x_hi, opt.gap_tolerance);
  rep.t = t;
  return rep;
}

// ---------------------------------------------------------------------------
// d = 2 degenerate cells

struct CellReport {
  double t = 0;
  std::int64_t cell_side = 0;
  std::int64_t n_cells = 0;
  std::int64_t n_degenerate = 0;
  double degenerate_fraction = 0;
};

// Start positions of initial particles whose subpopulation is alive at t.
inline std::vector<Site> surviving_starts(const SimulationRun& run, double t) {
  const auto& h = run.history;
  std::vector<std::int64_t> root(h.size());
  std::vector<char> alive_root(h.size(), 0);
  for (std::size_t id = 0; id < h.size(); ++id) {
    root[id] = h[id].parent < 0 ? static_cast<std::int64_t>(id) : root[static_cast<std::size_t>(h[id].parent)];
    if (h[id].alive_at(t, run.horizon)) alive_root[static_cast<std::size_t>(root[id])] = 1;
  }
  std::vector<Site> out;
  for (std::size_t id = 0; id < h.size(); ++id)
    if (h[id].parent < 0 && alive_root[id]) out.push_back(h[id].x);
  return out;
}

inline std::int64_t cell_side_for(double t, double nu, double c_hat) {
  detail::require(t > 0 && nu > 0 && c_hat > 0, "cell side needs t, nu and c_hat > 0");
  return static_cast<std::int64_t>(std::floor(std::sqrt(t * nu / c_hat)));
}

// The square [lo, lo + width)^2 is tiled by cells of side floor(sqrt(t nu / c));
// sites beyond the last whole cell are not scanned.
inline CellReport cell_stats_2d(const std::vector<Site>& survivor_starts, const Site& lo, std::int64_t width,
                                double t, double nu, double c_hat) {
  detail::require(lo.size() == 2, "cell_stats_2d needs d = 2");
  CellReport rep;
  rep.t = t;
  rep.cell_side = cell_side_for(t, nu, c_hat);
  if (rep.cell_side < 1)
    throw std::invalid_argument("cell side " + std::to_string(rep.cell_side) +
                                " < 1 site: use a larger t or a smaller nu");
  const std::int64_t per_axis = width / rep.cell_side;
  detail::require(per_axis >= 1, "scanned square is narrower than one cell");
  rep.n_cells = per_axis * per_axis;
  std::vector<char> hit(static_cast<std::size_t>(rep.n_cells), 0);
  for (const auto& s : survivor_starts) {
    detail::require(s.size() == 2, "cell_stats_2d needs two-dimensional start points");
    const std::int64_t cx = (s[0] - lo[0]), cy = (s[1] - lo[1]);
    if (cx < 0 || cy < 0) continue;
    const std::int64_t i = cx / rep.cell_side, j = cy / rep.cell_side;
    if (i >= per_axis || j >= per_axis) continue;
    hit[static_cast<std::size_t>(i * per_axis + j)] = 1;
  }
  for (char h : hit) rep.n_degenerate += h ? 0 : 1;
  rep.degenerate_fraction = static_cast<double>(rep.n_degenerate) / static_cast<double>(rep.n_cells);
  return rep;
}

}  // namespace brw
