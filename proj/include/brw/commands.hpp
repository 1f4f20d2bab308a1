#pragma once

#include "cluster_analysis.hpp"
#include "config.hpp"
#include "csv.hpp"

#include <boost/version.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>

#ifndef BRW2_VERSION
#define BRW2_VERSION "0.0.0"
#endif

namespace brw {

struct CommandOutcome {
  std::vector<std::string> files;  // data files, relative to the output directory
  nlohmann::json info = nlohmann::json::object();
  std::vector<std::string> replica_errors;  // "replica k: message"
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json versions() {
  return {{"brw2", BRW2_VERSION},
          {"boost", BOOST_LIB_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__}};
}

inline void write_manifest(const RunConfig& cfg, const std::string& command, const CommandOutcome& res) {
  const std::filesystem::path dir(cfg.experiment.out);
  nlohmann::json m{{"command", command},
                   {"config_hash", hex64(config_hash(cfg))},
                   {"seed", cfg.experiment.seed},
                   {"replicas", cfg.experiment.replicas},
                   {"versions", versions()},
                   {"files", res.files},
                   {"info", res.info},
                   {"replica_errors", res.replica_errors},
                   {"config", to_json(cfg)},
                   {"timestamp", utc_timestamp()}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.experiment.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline void check_times(const RunConfig& cfg) {
  for (double t : cfg.times())
    if (t < 0.0 || t > cfg.experiment.horizon)
      throw ConfigError("experiment.t_list", "entries must lie in [0, T]");
}

inline int box_or(const RunConfig& cfg, int d1, int d2, int d3) {
  if (cfg.experiment.box_radius > 0) return cfg.experiment.box_radius;
  return cfg.model.dim == 1 ? d1 : cfg.model.dim == 2 ? d2 : d3;
}

inline void write_site(csv::Writer& w, const Site& x) {
  for (auto c : x) w.field(static_cast<std::int64_t>(c));
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

// history_NNNN.csv per replica and snapshot.csv at every t in t_list.
inline CommandOutcome command_simulate(const RunConfig& cfg) {
  detail::check_times(cfg);
  const auto dir = detail::prepare_out(cfg);
  const auto model = cfg.model.two_type();
  const auto init = cfg.initial_particles();
  const auto times = cfg.times();
  const int dim = cfg.model.dim;
  const std::size_t n = cfg.experiment.replicas;
  const int width = std::max<int>(4, static_cast<int>(std::to_string(n - 1).size()));

  auto history_name = [&](std::uint64_t k) {
    std::string s = std::to_string(k);
    return "history_" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s +
           ".csv";
  };
  const auto results = ensemble_map(
      model, cfg.experiment.horizon, init, n, cfg.experiment.seed,
      [&](const SimulationRun& r) {
        csv::Writer w((dir / history_name(r.replica_id)).string());
        w.header(detail::concat({"replica", "record_id", "parent_id", "type"},
                                detail::concat(csv::coord_columns("x", dim), {"t1", "t2", "fate"})));
        for (std::size_t id = 0; id < r.history.size(); ++id) {
          const auto& h = r.history[id];
          w.field(r.replica_id).field(static_cast<std::int64_t>(id)).field(h.parent).field(static_cast<int>(h.type));
          detail::write_site(w, h.x);
          w.field(h.t1).field(h.t2).field(to_string(h.fate)).end_row();
        }
        w.close();
        std::vector<Snapshot> snaps;
        for (double t : times) snaps.push_back(snapshot(r, t));
        return snaps;
      },
      cfg.experiment.event_cap);

  CommandOutcome out;
  csv::Writer w((dir / "snapshot.csv").string());
  w.header(detail::concat({"replica", "t", "type"}, detail::concat(csv::coord_columns("x", dim), {"count"})));
  for (const auto& rr : results) {
    if (!rr.value) {
      out.replica_errors.push_back("replica " + std::to_string(rr.replica_id) + ": " + rr.error);
      continue;
    }
    out.files.push_back(history_name(rr.replica_id));
    for (std::size_t ti = 0; ti < times.size(); ++ti)
      for (const auto& [key, count] : (*rr.value)[ti]) {
        w.field(rr.replica_id).field(times[ti]).field(key.first);
        detail::write_site(w, key.second);
        w.field(count).end_row();
      }
  }
  w.close();
  out.files.push_back("snapshot.csv");
  out.info["initial_particles"] = init.size();
  return out;
}

// moments.csv: Fourier-route first and second moments on a box, with the
// largest first-moment gap to the truncated-lattice oracle per site.
inline CommandOutcome command_moments(const RunConfig& cfg) {
  detail::check_times(cfg);
  const auto dir = detail::prepare_out(cfg);
  const auto model = cfg.model.two_type();
  const auto grid = cfg.grid();
  const int box = detail::box_or(cfg, 30, 10, 4);
  const int dim = cfg.model.dim;

  csv::Writer w((dir / "moments.csv").string());
  std::vector<std::string> cols{"t"};
  cols = detail::concat(cols, csv::coord_columns("x", dim));
  cols = detail::concat(cols, {"m11_1", "m12_1", "m21_1", "m22_1", "m11_2", "m12_2", "m21_2", "m22_2",
                               "boundary_mass", "route_parity"});
  w.header(cols);
  CommandOutcome out;
  double worst = 0.0;
  bool degraded = false;
  for (double t : cfg.times()) {
    const auto m1 = first_moment_fourier_field(model, t, box, grid);
    DuhamelOptions dopt;
    dopt.box_radius = box;
    const auto m2 = second_moment_fourier_field(model, t, grid, dopt);
    const auto oracle = first_moment_ode_oracle(model, t, box);
    const double bmass = std::max(m2.boundary_mass, oracle.boundary_mass);
    degraded = degraded || m2.degraded || oracle.degraded;
    for (std::size_t k = 0; k < m1.box.size(); ++k) {
      w.field(t);
      detail::write_site(w, m1.box.site(k));
      double parity = 0.0;
      for (int s = 0; s < 4; ++s) {
        w.field(m1.values[s][k]);
        parity = std::max(parity, std::abs(m1.values[s][k] - oracle.values[s][k]));
      }
      for (int s = 0; s < 4; ++s) w.field(m2.values[s][k]);
      w.field(bmass).field(parity).end_row();
      worst = std::max(worst, parity);
    }
  }
  w.close();
  out.files.push_back("moments.csv");
  out.info["box_radius"] = box;
  out.info["grid_nodes"] = grid.axis();
  out.info["max_route_parity"] = worst;
  out.info["degraded"] = degraded;
  return out;
}

// clusters.csv (d = 1) or cells.csv (d = 2) from simulated snapshots.
inline CommandOutcome command_clusters(const RunConfig& cfg) {
  detail::check_times(cfg);
  const int dim = cfg.model.dim;
  if (dim == 3) throw UnsupportedConfiguration("clusters: d = 3 has no cluster statistic; use d = 1 or d = 2");
  const auto dir = detail::prepare_out(cfg);
  const auto model = cfg.model.two_type();
  const auto init = cfg.initial_particles();
  const auto times = cfg.times();
  const auto& ex = cfg.experiment;

  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& p : init)
    for (auto c : p.x) {
      lo = std::min<std::int64_t>(lo, c);
      hi = std::max<std::int64_t>(hi, c);
    }
  CommandOutcome out;

  if (dim == 1) {
    // wide enough that no particle reaches the edge in practice
    const double spread = std::max(model.kappa(1) * model.kernel(1).range() * model.kernel(1).range(),
                                   model.kappa(2) * model.kernel(2).range() * model.kernel(2).range());
    const auto pad = static_cast<std::int64_t>(std::ceil(12.0 * std::sqrt(spread * ex.horizon))) + 10;
    ClusterOptions copt;
    copt.gap_tolerance = ex.gap_tolerance;
    copt.type = ex.cluster_type;
    copt.unit = ex.cluster_unit;
    const auto results = ensemble_map(
        model, ex.horizon, init, ex.replicas, ex.seed,
        [&](const SimulationRun& r) {
          std::vector<ClusterReport> reps;
          for (double t : times) reps.push_back(cluster_stats_1d(r, t, lo - pad, hi + pad, copt));
          return reps;
        },
        ex.event_cap);
    csv::Writer w((dir / "clusters.csv").string());
    w.header({"replica", "t", "kind", "length"});
    for (const auto& rr : results) {
      if (!rr.value) {
        out.replica_errors.push_back("replica " + std::to_string(rr.replica_id) + ": " + rr.error);
        continue;
      }
      for (std::size_t ti = 0; ti < times.size(); ++ti) {
        for (auto len : (*rr.value)[ti].cluster_lengths) w.field(rr.replica_id).field(times[ti]).field("cluster").field(len).end_row();
        for (auto len : (*rr.value)[ti].gap_lengths) w.field(rr.replica_id).field(times[ti]).field("gap").field(len).end_row();
      }
    }
    w.close();
    out.files.push_back("clusters.csv");
    out.info["window"] = {lo - pad, hi + pad};
    out.info["cluster_unit"] = ex.cluster_unit == ClusterUnit::sites ? "sites" : "lineages";
    return out;
  }

  double c_hat = 0.0;
  if (ex.c_hat) {
    c_hat = *ex.c_hat;
  } else {
    LineageOptions lopt;
    lopt.event_cap = ex.event_cap;
    const auto st = lineage_study(model, 1, {0.5 * ex.horizon, ex.horizon}, 400, ex.seed ^ 0x9e3779b97f4a7c15ull, lopt);
    c_hat = st.c_hat;
    if (!st.warning.empty()) out.info["c_hat_warning"] = st.warning;
  }
  out.info["c_hat"] = c_hat;
  const Site corner{static_cast<std::int32_t>(lo), static_cast<std::int32_t>(lo)};
  const std::int64_t width = hi - lo + 1;
  const auto results = ensemble_map(
      model, ex.horizon, init, ex.replicas, ex.seed,
      [&](const SimulationRun& r) {
        std::vector<CellReport> reps;
        for (double t : times) {
          const double nu = ex.nu ? *ex.nu : std::log(t);
          CellReport rep;
          rep.t = t;
          rep.degenerate_fraction = std::numeric_limits<double>::quiet_NaN();
          if (t > 0.0 && nu > 0.0 && c_hat > 0.0 && cell_side_for(t, nu, c_hat) >= 1 &&
              cell_side_for(t, nu, c_hat) <= width)
            rep = cell_stats_2d(surviving_starts(r, t), corner, width, t, nu, c_hat);
          reps.push_back(rep);
        }
        return reps;
      },
      ex.event_cap);
  csv::Writer w((dir / "cells.csv").string());
  w.header({"replica", "t", "cell_side", "n_cells", "degenerate_fraction"});
  for (const auto& rr : results) {
    if (!rr.value) {
      out.replica_errors.push_back("replica " + std::to_string(rr.replica_id) + ": " + rr.error);
      continue;
    }
    for (const auto& rep : *rr.value)
      w.field(rr.replica_id).field(rep.t).field(rep.cell_side).field(rep.n_cells).field(rep.degenerate_fraction).end_row();
  }
  w.close();
  out.files.push_back("cells.csv");
  return out;
}

// epidemic.csv: R1, R2, E N1^2 and the intermittency ratio per site;
// corr.csv: pair correlations between the origin and u.
inline CommandOutcome command_epidemic(const RunConfig& cfg) {
  detail::check_times(cfg);
  const auto em = cfg.model.epidemic_model();
  const auto dir = detail::prepare_out(cfg);
  const auto grid = cfg.grid();
  const int dim = cfg.model.dim;
  const int box = detail::box_or(cfg, 40, 12, 5);
  const int cbox = cfg.experiment.corr_box > 0 ? cfg.experiment.corr_box : (dim == 1 ? 10 : dim == 2 ? 4 : 2);
  const LatticeBox lbox(dim, box);
  const BoxTransform tr(grid, lbox);

  CommandOutcome out;
  bool degraded = false;
  csv::Writer w((dir / "epidemic.csv").string());
  w.header(detail::concat(detail::concat({"t"}, csv::coord_columns("x", dim)), {"R1", "R2", "M2_diag", "ratio"}));
  csv::Writer c((dir / "corr.csv").string());
  c.header(detail::concat(detail::concat({"t"}, csv::coord_columns("u", dim)), {"R11", "R12", "R22"}));
  for (double t : cfg.times()) {
    std::vector<double> r1(lbox.size(), 0.0), r2(lbox.size(), 0.0);
    if (t == 0.0) {
      r1[lbox.center()] = 1.0;
    } else {
      const auto [s1, s2] = epidemic_first_moment_spectra(em, t, grid);
      tr.inverse(s1, r1);
      tr.inverse(s2, r2);
    }
    const auto m2 = epidemic_m2_ode(em, t, box);
    degraded = degraded || m2.degraded;
    for (std::size_t k = 0; k < lbox.size(); ++k) {
      w.field(t);
      detail::write_site(w, lbox.site(k));
      const double ratio = std::abs(r1[k]) > 1e-300 ? m2.m2[k] / (r1[k] * r1[k]) : std::numeric_limits<double>::quiet_NaN();
      w.field(r1[k]).field(r2[k]).field(m2.m2[k]).field(ratio).end_row();
    }
    const auto cf = correlation_ode(em, t, cbox);
    degraded = degraded || cf.degraded;
    const Site o = origin(dim);
    for (std::size_t k = 0; k < cf.box.size(); ++k) {
      const Site u = cf.box.site(k);
      c.field(t);
      detail::write_site(c, u);
      c.field(cf.R11(o, u)).field(cf.R12(o, u)).field(cf.R22(o, u)).end_row();
    }
  }
  w.close();
  c.close();
  out.files = {"epidemic.csv", "corr.csv"};
  out.info["box_radius"] = box;
  out.info["corr_box"] = cbox;
  out.info["growth"] = em.law.growth();
  out.info["degraded"] = degraded;
  return out;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "moments", "clusters", "epidemic"};
  return names;
}

// Runs a command and writes manifest.json next to its data files.
inline CommandOutcome run_command(const std::string& name, const RunConfig& cfg) {
  CommandOutcome res;
  if (name == "simulate") res = command_simulate(cfg);
  else if (name == "moments") res = command_moments(cfg);
  else if (name == "clusters") res = command_clusters(cfg);
  else if (name == "epidemic") res = command_epidemic(cfg);
  else throw ConfigError("command", "unknown command '" + name + "'");
  detail::write_manifest(cfg, name, res);
  return res;
}

// Machine-readable error record for stderr.
inline nlohmann::json error_record(const std::exception& e) {
  nlohmann::json j{{"message", e.what()}};
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) {
    j["kind"] = c->syntax() ? "syntax" : "config";
    j["path"] = c->path();
    j["rule"] = c->rule();
    if (c->syntax()) {
      j["line"] = c->line();
      j["column"] = c->column();
    }
  } else if (dynamic_cast<const UnsupportedConfiguration*>(&e)) {
    j["kind"] = "unsupported_configuration";
  } else if (dynamic_cast<const EventCapExceeded*>(&e)) {
    j["kind"] = "event_cap_exceeded";
  } else if (dynamic_cast<const IntegrationError*>(&e)) {
    j["kind"] = "integration";
  } else if (dynamic_cast<const std::invalid_argument*>(&e)) {
    j["kind"] = "invalid_argument";
  } else {
    j["kind"] = "runtime";
  }
  return {{"error", j}};
}

}  // namespace brw
