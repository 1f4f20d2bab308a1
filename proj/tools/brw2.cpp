// brw2: command-line front end for the two-type branching random walk library.

#include "brw/commands.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw brw::ConfigError("--t", "'" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw brw::ConfigError("--t", "empty time list");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw brw::ConfigError("--config", "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-type branching random walks on Z^d: simulation, moments, clustering, epidemic"};
  app.set_version_flag("--version", BRW2_VERSION);
  std::string command, config_path, preset, out_dir, t_list;
  std::optional<std::size_t> replicas;
  std::optional<std::uint64_t> seed;
  std::optional<int> box, grid;
  bool dump = false;
  app.add_option("command", command, "simulate | moments | clusters | epidemic")
      ->required()
      ->check(CLI::IsMember(brw::command_names()));
  auto* cfg_opt = app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--preset", preset, "fig-z1 | fig-z2")->excludes(cfg_opt);
  app.add_option("--replicas", replicas, "number of replicas");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--t", t_list, "comma-separated time list");
  app.add_option("--box", box, "box radius L");
  app.add_option("--grid", grid, "frequency grid nodes per axis");
  app.add_flag("--dump-config", dump, "print the resolved configuration and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::json j{{"error", {{"kind", "usage"}, {"message", e.what()}}}};
    std::cerr << j.dump() << "\n";
    return 2;
  }

  try {
    nlohmann::json j;
    if (!preset.empty()) {
      j = brw::to_json(brw::preset(preset));
    } else if (!config_path.empty()) {
      j = brw::to_json(brw::parse_config(read_file(config_path)));
    } else {
      throw brw::ConfigError("", "give --config PATH or --preset NAME");
    }
    auto& e = j["experiment"];
    if (replicas) e["replicas"] = *replicas;
    if (seed) e["seed"] = *seed;
    if (!out_dir.empty()) e["out"] = out_dir;
    if (!t_list.empty()) {
      const auto ts = parse_list(t_list);
      e["t_list"] = ts;
      const double tmax = *std::max_element(ts.begin(), ts.end());
      if (tmax > e["T"].get<double>()) e["T"] = tmax;
    }
    if (box) e["box_radius"] = *box;
    if (grid) e["grid_nodes"] = *grid;
    const auto cfg = brw::parse_config_json(j);
    if (dump) {
      std::cout << brw::serialize_config(cfg);
      return 0;
    }
    const auto res = brw::run_command(command, cfg);
    for (const auto& f : res.files) std::cout << (std::filesystem::path(cfg.experiment.out) / f).string() << "\n";
    if (!res.replica_errors.empty()) {
      nlohmann::json err{{"error",
                          {{"kind", "replica_failures"},
                           {"message", std::to_string(res.replica_errors.size()) + " replica(s) failed"},
                           {"replicas", res.replica_errors}}}};
      std::cerr << err.dump() << "\n";
      return 3;
    }
    return 0;
  } catch (const brw::ConfigError& e) {
    std::cerr << brw::error_record(e).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << brw::error_record(e).dump() << "\n";
    return 3;
  }
}
