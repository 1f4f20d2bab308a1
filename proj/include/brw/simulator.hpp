#pragma once

#include "model.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <variant>

namespace brw {

enum class Fate : std::uint8_t { died, branched, jumped, converted, censored };

inline const char* to_string(Fate f) {
  switch (f) {
    case Fate::died: return "died";
    case Fate::branched: return "branched";
    case Fate::jumped: return "jumped";
    case Fate::converted: return "converted";
    case Fate::censored: return "censored";
  }
  return "?";
}

// One sojourn [type, x, t1, t2] of a particle at a site.
struct ParticleRecord {
  std::int64_t parent = -1;  // record id of the parent, -1 for initial particles
  double t1 = 0.0;
  double t2 = 0.0;
  Site x;
  std::int32_t k = 0;      // branched: type-1 offspring; jumped: kernel entry index
  std::int32_t l = 0;      // branched: type-2 offspring
  std::uint8_t type = 1;
  Fate fate = Fate::censored;

  bool alive_at(double t, double horizon) const {
    if (t1 > t) return false;
    return t < t2 || (fate == Fate::censored && t <= horizon);
  }

  bool operator==(const ParticleRecord&) const = default;
};

struct InitialParticle {
  int type = 1;
  Site x;
  bool operator==(const InitialParticle&) const = default;
};

struct SimulationRun {
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replica_id = 0;
  std::vector<InitialParticle> initial;
  std::vector<ParticleRecord> history;

  // jump displacement of a record with fate jumped
  Site jump_of(const ParticleRecord& r, const TwoTypeModel& model) const {
    return model.kernel(r.type).entries()[static_cast<std::size_t>(r.k)].v;
  }
};

constexpr std::size_t default_event_cap = 10'000'000;

namespace detail {

// event table of one type: cumulative rates in the order
// death, births (sorted), jump, conversion
struct EventTable {
  double total = 0.0;
  double death = 0.0;
  std::vector<double> birth_cum;
  std::vector<Birth> births;
  double jump_end = 0.0;
};

inline EventTable event_table(const TwoTypeModel& model, int type) {
  EventTable e;
  double acc = model.law().mu(type);
  e.death = acc;
  for (const auto& b : model.law().beta(type)) {
    acc += b.rate;
    e.birth_cum.push_back(acc);
    e.births.push_back(b);
  }
  acc += model.kappa(type);
  e.jump_end = acc;
  if (type == 1) acc += model.law().conversion_rate();
  e.total = acc;
  return e;
}

inline std::array<bool, 2> reachable_types(const TwoTypeModel& model,
                                           const std::vector<InitialParticle>& initial) {
  std::array<bool, 2> reach{false, false};
  for (const auto& p : initial) reach[p.type - 1] = true;
  for (int pass = 0; pass < 2; ++pass) {
    if (reach[0]) {
      if (model.law().conversion_rate() > 0) reach[1] = true;
      for (const auto& b : model.law().beta(1))
        if (b.rate > 0 && b.l > 0) reach[1] = true;
    }
    if (reach[1])
      for (const auto& b : model.law().beta(2))
        if (b.rate > 0 && b.k > 0) reach[0] = true;
  }
  return reach;
}

}  // namespace detail

// Exact event-driven realisation. Records are processed depth-first per
// lineage; each record draws its own exponential sojourn.
inline SimulationRun run(const TwoTypeModel& model, double horizon,
                         const std::vector<InitialParticle>& initial, std::uint64_t seed,
                         std::size_t event_cap = default_event_cap, std::uint64_t replica_id = 0) {
  detail::require(horizon > 0.0 && std::isfinite(horizon), "run: horizon T must be finite and > 0");
  detail::require(!initial.empty(), "run: initial configuration is empty");
  for (const auto& p : initial) {
    detail::require(p.type == 1 || p.type == 2, "run: particle type must be 1 or 2");
    detail::require(static_cast<int>(p.x.size()) == model.dim(), "run: initial position has wrong dimension");
  }
  const auto reach = detail::reachable_types(model, initial);
  for (int i = 1; i <= 2; ++i)
    detail::require(!reach[i - 1] || model.total_rate(i) > 0.0,
                    "run: type " + std::to_string(i) + " has total event rate 0 (invalid rates)");

  const detail::EventTable table[2] = {detail::event_table(model, 1), detail::event_table(model, 2)};

  SimulationRun out;
  out.horizon = horizon;
  out.seed = seed;
  out.replica_id = replica_id;
  out.initial = initial;
  Philox4x32 rng(seed, replica_id);

  struct Pending {
    std::int64_t parent;
    double t1;
    Site x;
    std::uint8_t type;
  };
  std::vector<Pending> stack;
  for (auto it = initial.rbegin(); it != initial.rend(); ++it)
    stack.push_back({-1, 0.0, it->x, static_cast<std::uint8_t>(it->type)});

  while (!stack.empty()) {
    Pending p = std::move(stack.back());
    stack.pop_back();
    if (out.history.size() >= event_cap) throw EventCapExceeded(event_cap);
    const auto& tb = table[p.type - 1];
    ParticleRecord rec;
    rec.parent = p.parent;
    rec.t1 = p.t1;
    rec.x = std::move(p.x);
    rec.type = p.type;
    const double t2 = p.t1 + rng.exponential(tb.total);
    const auto id = static_cast<std::int64_t>(out.history.size());
    if (!(t2 < horizon)) {
      rec.t2 = horizon;
      rec.fate = Fate::censored;
      out.history.push_back(std::move(rec));
      continue;
    }
    rec.t2 = t2;
    const double u = rng.uniform() * tb.total;
    if (u < tb.death) {
      rec.fate = Fate::died;
    } else if (!tb.births.empty() && u < tb.birth_cum.back()) {
      std::size_t n = 0;
      while (n + 1 < tb.births.size() && u >= tb.birth_cum[n]) ++n;
      const auto& b = tb.births[n];
      rec.fate = Fate::branched;
      rec.k = b.k;
      rec.l = b.l;
      // children pushed in reverse so the first type-1 child is processed first
      for (int c = 0; c < b.l; ++c) stack.push_back({id, t2, rec.x, 2});
      for (int c = 0; c < b.k; ++c) stack.push_back({id, t2, rec.x, 1});
    } else if (u < tb.jump_end || p.type == 2 || model.law().conversion_rate() == 0.0) {
      const auto& kernel = model.kernel(p.type);
      const std::size_t e = kernel.draw_index(rng);
      rec.fate = Fate::jumped;
      rec.k = static_cast<std::int32_t>(e);
      stack.push_back({id, t2, rec.x + kernel.entries()[e].v, p.type});
    } else {
      rec.fate = Fate::converted;
      stack.push_back({id, t2, rec.x, 2});
    }
    out.history.push_back(std::move(rec));
  }
  return out;
}

using Snapshot = std::map<std::pair<int, Site>, std::int64_t>;

inline Snapshot snapshot(const SimulationRun& run, double t) {
  if (!(t >= 0.0 && t <= run.horizon)) throw std::invalid_argument("snapshot: t outside [0, T]");
  Snapshot s;
  for (const auto& r : run.history)
    if (r.alive_at(t, run.horizon)) ++s[{r.type, r.x}];
  return s;
}

inline std::array<std::int64_t, 2> alive_totals(const SimulationRun& run, double t) {
  std::array<std::int64_t, 2> n{0, 0};
  for (const auto& r : run.history)
    if (r.alive_at(t, run.horizon)) ++n[r.type - 1];
  return n;
}

// ---------------------------------------------------------------------------
// Ensembles

inline unsigned default_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BRW2_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

// Calls fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

template <class R>
struct ReplicaResult {
  std::uint64_t replica_id = 0;
  std::optional<R> value;
  std::string error;  // non-empty when the replica failed
};

// Runs n replicas (replica k uses stream (base_seed, k)) and maps each
// completed run through fn; per-replica failures are recorded, not thrown.
template <class Fn>
auto ensemble_map(const TwoTypeModel& model, double horizon, const std::vector<InitialParticle>& initial,
                  std::size_t n_replicas, std::uint64_t base_seed, Fn&& fn,
                  std::size_t event_cap = default_event_cap, unsigned threads = default_threads()) {
  using R = std::decay_t<decltype(fn(std::declval<const SimulationRun&>()))>;
  detail::require(n_replicas >= 1, "ensemble: n_replicas must be >= 1");
  std::vector<ReplicaResult<R>> out(n_replicas);
  parallel_for(n_replicas, threads, [&](std::size_t k) {
    out[k].replica_id = k;
    try {
      const auto r = run(model, horizon, initial, base_seed, event_cap, k);
      out[k].value = fn(r);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      out[k].error = e.what();
    }
  });
  return out;
}

struct SiteStats {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;     // sample variance of the count
  double std_error = 0.0;    // of the mean
  double mean_square = 0.0;  // empirical second moment
  double mean_square_se = 0.0;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<ReplicaResult<SimulationRun>> replicas;  // runs kept only on request
  std::vector<std::string> errors;                     // per replica, empty on success
  std::size_t n_ok = 0;
  // (time index, type, site) -> statistics over successful replicas
  std::map<std::tuple<std::size_t, int, Site>, SiteStats> stats;

  SiteStats at(std::size_t time_index, int type, const Site& x) const {
    auto it = stats.find({time_index, type, x});
    if (it != stats.end()) return it->second;
    SiteStats z;
    z.n = n_ok;
    return z;
  }
};

struct EnsembleOptions {
  std::vector<double> times;
  bool keep_runs = false;
  std::size_t event_cap = default_event_cap;
  unsigned threads = default_threads();
};

inline EnsembleResult ensemble(const TwoTypeModel& model, double horizon,
                               const std::vector<InitialParticle>& initial, std::size_t n_replicas,
                               std::uint64_t base_seed, const EnsembleOptions& opt) {
  for (double t : opt.times)
    detail::require(t >= 0.0 && t <= horizon, "ensemble: requested time outside [0, T]");
  struct PerRun {
    std::vector<Snapshot> snaps;
    std::optional<SimulationRun> run;
  };
  const bool keep = opt.keep_runs;
  const auto results = ensemble_map(
      model, horizon, initial, n_replicas, base_seed,
      [&](const SimulationRun& r) {
        PerRun p;
        for (double t : opt.times) p.snaps.push_back(snapshot(r, t));
        if (keep) p.run = r;
        return p;
      },
      opt.event_cap, opt.threads);

  EnsembleResult res;
  res.times = opt.times;
  struct Acc {
    double s = 0, s2 = 0, s4 = 0;
  };
  std::map<std::tuple<std::size_t, int, Site>, Acc> acc;
  for (const auto& rr : results) {
    res.errors.push_back(rr.error);
    ReplicaResult<SimulationRun> kept;
    kept.replica_id = rr.replica_id;
    kept.error = rr.error;
    if (rr.value) {
      ++res.n_ok;
      for (std::size_t ti = 0; ti < rr.value->snaps.size(); ++ti)
        for (const auto& [key, cnt] : rr.value->snaps[ti]) {
          auto& a = acc[{ti, key.first, key.second}];
          const double c = static_cast<double>(cnt);
          a.s += c;
          a.s2 += c * c;
          a.s4 += c * c * c * c;
        }
      if (keep) kept.value = *rr.value->run;
    }
    if (keep) res.replicas.push_back(std::move(kept));
  }
  const double n = static_cast<double>(res.n_ok);
  for (const auto& [key, a] : acc) {
    SiteStats st;
    st.n = res.n_ok;
    st.mean = a.s / n;
    st.mean_square = a.s2 / n;
    if (res.n_ok > 1) {
      st.variance = std::max(0.0, (a.s2 - n * st.mean * st.mean) / (n - 1.0));
      st.std_error = std::sqrt(st.variance / n);
      const double var2 = std::max(0.0, (a.s4 - n * st.mean_square * st.mean_square) / (n - 1.0));
      st.mean_square_se = std::sqrt(var2 / n);
    }
    res.stats[key] = st;
  }
  return res;
}

}  // namespace brw
