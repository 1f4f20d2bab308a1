#pragma once

#include "epidemic_model.hpp"
#include "cluster_analysis.hpp"

#include "csv.hpp"
#include "json.hpp"

#include <optional>
#include <set>
#include <string>

namespace brw {

// Semantic violation at a key path, or a syntax error at line/column.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, std::string rule, int line = 0, int column = 0)
      : std::invalid_argument(path.empty() ? rule : path + ": " + rule),
        path_(std::move(path)), rule_(std::move(rule)), line_(line), column_(column) {}
  const std::string& path() const { return path_; }
  const std::string& rule() const { return rule_; }
  int line() const { return line_; }
  int column() const { return column_; }
  bool syntax() const { return line_ > 0; }

 private:
  std::string path_, rule_;
  int line_, column_;
};

struct KernelSpec {
  enum class Kind { nearest_neighbour, uniform_box, pairs };
  Kind kind = Kind::nearest_neighbour;
  int radius = 1;
  std::vector<std::pair<Site, double>> pairs;

  JumpKernel build(int dim) const {
    switch (kind) {
      case Kind::nearest_neighbour: return JumpKernel::nearest_neighbour(dim);
      case Kind::uniform_box: return JumpKernel::uniform_box(dim, radius);
      case Kind::pairs: return JumpKernel::from_pairs(dim, pairs);
    }
    return JumpKernel::nearest_neighbour(dim);
  }
  bool operator==(const KernelSpec&) const = default;
};

struct WalkSpec {
  double kappa = 1.0;
  KernelSpec kernel;
  bool operator==(const WalkSpec&) const = default;
};

struct LawSpec {
  double mu1 = 0.0, mu2 = 0.0, conversion_rate = 0.0;
  std::vector<Birth> beta1, beta2;
  bool operator==(const LawSpec&) const = default;
};

struct ModelSpec {
  int dim = 1;
  WalkSpec walk1, walk2;
  std::optional<LawSpec> law;           // general two-type law
  std::optional<EpidemicLaw> epidemic;  // infected / immune law

  bool is_epidemic() const { return epidemic.has_value(); }
  BranchingLaw branching_law() const {
    if (epidemic) return epidemic->to_branching_law();
    const LawSpec l = law.value_or(LawSpec{});
    return BranchingLaw(l.mu1, l.mu2, l.beta1, l.beta2, l.conversion_rate);
  }
  TwoTypeModel two_type() const {
    return TwoTypeModel(walk1.kernel.build(dim), walk1.kappa, walk2.kernel.build(dim), walk2.kappa,
                        branching_law());
  }
  EpidemicModel epidemic_model() const {
    if (!epidemic) throw ConfigError("model.epidemic", "missing: the epidemic command needs an epidemic law");
    return EpidemicModel{*epidemic, walk1.kernel.build(dim), walk2.kernel.build(dim), walk1.kappa, walk2.kappa};
  }
  bool operator==(const ModelSpec&) const = default;
};

// A block of initial particles: `count` copies at x, or one particle on every
// site of the cube [lo, hi]^d when `cube` is set.
struct InitialSpec {
  int type = 1;
  Site x;
  std::int64_t count = 1;
  std::optional<std::pair<std::int64_t, std::int64_t>> cube;
  bool operator==(const InitialSpec&) const = default;
};

struct ExperimentSpec {
  double horizon = 10.0;
  std::vector<double> t_list;  // empty: {horizon}
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  int box_radius = 0;  // 0: per-command default
  int grid_nodes = 0;  // 0: default for the dimension
  int corr_box = 0;    // 0: default for the dimension
  std::string out = "out";
  std::vector<InitialSpec> initial;  // empty: one type-1 particle at the origin
  std::size_t event_cap = default_event_cap;
  int gap_tolerance = 1;
  int cluster_type = 0;
  ClusterUnit cluster_unit = ClusterUnit::sites;
  std::optional<double> nu;     // cell scale; default log t
  std::optional<double> c_hat;  // survival constant; estimated when absent
  bool operator==(const ExperimentSpec&) const = default;
};

struct RunConfig {
  ModelSpec model;
  ExperimentSpec experiment;

  std::vector<double> times() const {
    return experiment.t_list.empty() ? std::vector<double>{experiment.horizon} : experiment.t_list;
  }
  std::vector<InitialParticle> initial_particles() const {
    std::vector<InitialParticle> out;
    if (experiment.initial.empty()) {
      out.push_back({1, origin(model.dim)});
      return out;
    }
    for (const auto& b : experiment.initial) {
      if (!b.cube) {
        for (std::int64_t k = 0; k < b.count; ++k) out.push_back({b.type, b.x});
        continue;
      }
      const auto [lo, hi] = *b.cube;
      Site s(static_cast<std::size_t>(model.dim), static_cast<std::int32_t>(lo));
      while (true) {
        out.push_back({b.type, s});
        int k = model.dim - 1;
        while (k >= 0 && s[static_cast<std::size_t>(k)] == hi) s[static_cast<std::size_t>(k--)] = static_cast<std::int32_t>(lo);
        if (k < 0) break;
        ++s[static_cast<std::size_t>(k)];
      }
    }
    return out;
  }
  int grid_nodes() const {
    return experiment.grid_nodes > 0 ? experiment.grid_nodes : ThetaGrid::default_nodes(model.dim);
  }
  ThetaGrid grid() const { return ThetaGrid(model.dim, grid_nodes()); }
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& rule) const { throw ConfigError(path_, rule); }
  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string index_path(std::size_t i) const { return path_ + "[" + std::to_string(i) + "]"; }

  void object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(child_path(k), "unknown key");
  }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  Reader at(const char* key) const { return Reader(j_.at(key), child_path(key)); }
  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("must be finite");
    return v;
  }
  double rate() const {
    const double v = number();
    if (v < 0.0) fail("must be >= 0");
    return v;
  }
  std::int64_t integer() const {
    if (j_.is_number_integer()) return j_.get<std::int64_t>();
    if (j_.is_number_float()) {
      const double v = j_.get<double>();
      if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
    }
    fail("expected an integer");
  }
  std::uint64_t unsigned_integer() const {
    if (j_.is_number_unsigned()) return j_.get<std::uint64_t>();
    const auto v = integer();
    if (v < 0) fail("must be >= 0");
    return static_cast<std::uint64_t>(v);
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::vector<Reader> array() const {
    if (!j_.is_array()) fail("expected a list");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], index_path(i));
    return out;
  }
  Site site(int dim) const {
    const auto items = array();
    if (static_cast<int>(items.size()) != dim)
      fail("expected " + std::to_string(dim) + " coordinates, got " + std::to_string(items.size()));
    Site s;
    for (const auto& c : items) {
      const auto v = c.integer();
      if (std::abs(v) > 1'000'000'000) c.fail("coordinate out of range");
      s.push_back(static_cast<std::int32_t>(v));
    }
    return s;
  }

 private:
  const json& j_;
  std::string path_;
};

// Runs fn and re-labels library validation errors with the key path.
template <class Fn>
auto at_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

inline KernelSpec parse_kernel(const Reader& r, int dim) {
  KernelSpec k;
  if (r.raw().is_string()) {
    const auto s = r.string();
    if (s == "nearest_neighbour") k.kind = KernelSpec::Kind::nearest_neighbour;
    else r.fail("unknown kernel name '" + s + "' (expected nearest_neighbour, {uniform_box: R} or {pairs: [...]})");
  } else {
    r.object({"uniform_box", "pairs"});
    if (r.has("uniform_box") == r.has("pairs")) r.fail("give exactly one of uniform_box or pairs");
    if (r.has("uniform_box")) {
      k.kind = KernelSpec::Kind::uniform_box;
      const auto rr = r.at("uniform_box");
      const auto v = rr.integer();
      if (v < 1 || v > 1000) rr.fail("radius must be in [1, 1000]");
      k.radius = static_cast<int>(v);
    } else {
      k.kind = KernelSpec::Kind::pairs;
      for (const auto& e : r.at("pairs").array()) {
        const auto pr = e.array();
        if (pr.size() != 2) e.fail("expected [vector, weight]");
        k.pairs.emplace_back(pr[0].site(dim), pr[1].number());
      }
    }
  }
  at_path(r.path(), [&] { return k.build(dim); });
  return k;
}

inline WalkSpec parse_walk(const Reader& r, int dim) {
  r.object({"kappa", "kernel"});
  WalkSpec w;
  if (r.has("kappa")) w.kappa = r.at("kappa").rate();
  if (r.has("kernel")) w.kernel = parse_kernel(r.at("kernel"), dim);
  return w;
}

inline std::vector<Birth> parse_births(const Reader& r) {
  std::vector<Birth> out;
  for (const auto& e : r.array()) {
    const auto f = e.array();
    if (f.size() != 3) e.fail("expected [k, l, rate]");
    Birth b;
    const auto k = f[0].integer(), l = f[1].integer();
    if (k < 0 || l < 0 || k > 1000 || l > 1000) e.fail("offspring counts must be in [0, 1000]");
    b.k = static_cast<int>(k);
    b.l = static_cast<int>(l);
    b.rate = f[2].rate();
    if (b.k + b.l < 2)
      e.fail("k + l must be >= 2: a single offspring is a type change, which only conversion_rate may express");
    out.push_back(b);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& root) {
  using detail::Reader;
  RunConfig c;
  const Reader top(root, "");
  top.object({"model", "experiment"});
  if (!top.has("model")) top.fail("missing key 'model'");

  const auto m = top.at("model");
  m.object({"dim", "type1", "type2", "law", "epidemic"});
  if (m.has("dim")) {
    const auto d = m.at("dim");
    const auto v = d.integer();
    if (v < 1 || v > 3) d.fail("dim must be 1, 2 or 3");
    c.model.dim = static_cast<int>(v);
  }
  const int dim = c.model.dim;
  if (m.has("type1")) c.model.walk1 = detail::parse_walk(m.at("type1"), dim);
  if (m.has("type2")) c.model.walk2 = detail::parse_walk(m.at("type2"), dim);
  if (m.has("law") && m.has("epidemic")) m.fail("give at most one of law or epidemic");
  if (m.has("law")) {
    const auto l = m.at("law");
    l.object({"mu1", "mu2", "conversion_rate", "beta1", "beta2"});
    LawSpec s;
    if (l.has("mu1")) s.mu1 = l.at("mu1").rate();
    if (l.has("mu2")) s.mu2 = l.at("mu2").rate();
    if (l.has("conversion_rate")) s.conversion_rate = l.at("conversion_rate").rate();
    if (l.has("beta1")) s.beta1 = detail::parse_births(l.at("beta1"));
    if (l.has("beta2")) s.beta2 = detail::parse_births(l.at("beta2"));
    c.model.law = s;
    detail::at_path(l.path(), [&] { return c.model.branching_law(); });
  } else if (m.has("epidemic")) {
    const auto e = m.at("epidemic");
    e.object({"mu1", "mu2", "conversion_rate", "infection"});
    EpidemicLaw s;
    if (e.has("mu1")) s.mu1 = e.at("mu1").rate();
    if (e.has("mu2")) s.mu2 = e.at("mu2").rate();
    if (e.has("conversion_rate")) s.conversion_rate = e.at("conversion_rate").rate();
    if (e.has("infection")) {
      for (const auto& it : e.at("infection").array()) {
        const auto f = it.array();
        if (f.size() != 2) it.fail("expected [n, rate]");
        const auto n = f[0].integer();
        if (n < 2 || n > 1000) f[0].fail("n must be in [2, 1000]");
        if (s.infection.count(static_cast<int>(n))) it.fail("duplicate entry for n = " + std::to_string(n));
        s.infection[static_cast<int>(n)] = f[1].rate();
      }
    }
    c.model.epidemic = s;
    detail::at_path(e.path(), [&] { return c.model.branching_law(); });
  }
  detail::at_path("model", [&] { return c.model.two_type(); });

  if (!top.has("experiment")) return c;
  auto& x = c.experiment;
  const auto e = top.at("experiment");
  e.object({"T", "t_list", "replicas", "seed", "box_radius", "grid_nodes", "corr_box", "out", "initial",
            "event_cap", "gap_tolerance", "cluster_type", "cluster_unit", "nu", "c_hat"});
  if (e.has("T")) {
    x.horizon = e.at("T").number();
    if (!(x.horizon > 0.0)) e.at("T").fail("must be > 0");
  }
  if (e.has("t_list")) {
    for (const auto& t : e.at("t_list").array()) {
      const double v = t.number();
      if (v < 0.0) t.fail("must be >= 0");
      if (v > x.horizon) t.fail("exceeds T = " + csv::format_double(x.horizon));
      x.t_list.push_back(v);
    }
  }
  auto positive_int = [](const Reader& r, std::int64_t lo, std::int64_t hi) {
    const auto v = r.integer();
    if (v < lo || v > hi) r.fail("must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  };
  if (e.has("replicas")) x.replicas = static_cast<std::size_t>(positive_int(e.at("replicas"), 1, 100'000'000));
  if (e.has("seed")) x.seed = e.at("seed").unsigned_integer();
  if (e.has("box_radius")) x.box_radius = static_cast<int>(positive_int(e.at("box_radius"), 0, 100'000));
  if (e.has("grid_nodes")) {
    const auto r = e.at("grid_nodes");
    const auto v = positive_int(r, 0, 1 << 20);
    if (v % 2) r.fail("must be even (0 selects the default)");
    x.grid_nodes = static_cast<int>(v);
  }
  if (e.has("corr_box")) x.corr_box = static_cast<int>(positive_int(e.at("corr_box"), 0, 1000));
  if (e.has("out")) x.out = e.at("out").string();
  if (e.has("initial")) {
    for (const auto& b : e.at("initial").array()) {
      b.object({"type", "x", "count", "cube"});
      InitialSpec s;
      if (b.has("type")) s.type = static_cast<int>(positive_int(b.at("type"), 1, 2));
      if (b.has("x") == b.has("cube")) b.fail("give exactly one of x or cube");
      if (b.has("x")) {
        s.x = b.at("x").site(dim);
        if (b.has("count")) s.count = positive_int(b.at("count"), 1, 100'000'000);
      } else {
        if (b.has("count")) b.at("count").fail("count applies only with x");
        const auto cb = b.at("cube").array();
        if (cb.size() != 2) b.at("cube").fail("expected [lo, hi]");
        const auto lo = cb[0].integer(), hi = cb[1].integer();
        if (lo > hi) b.at("cube").fail("lo must be <= hi");
        if (hi - lo > 100'000) b.at("cube").fail("cube is too wide");
        s.cube = std::make_pair(lo, hi);
        s.x = origin(dim);
      }
      x.initial.push_back(s);
    }
  }
  if (e.has("event_cap")) x.event_cap = static_cast<std::size_t>(positive_int(e.at("event_cap"), 1, 1'000'000'000'000));
  if (e.has("gap_tolerance")) x.gap_tolerance = static_cast<int>(positive_int(e.at("gap_tolerance"), 1, 1'000'000));
  if (e.has("cluster_type")) x.cluster_type = static_cast<int>(positive_int(e.at("cluster_type"), 0, 2));
  if (e.has("cluster_unit")) {
    const auto u = e.at("cluster_unit");
    const auto v = u.string();
    if (v == "sites") x.cluster_unit = ClusterUnit::sites;
    else if (v == "lineages") x.cluster_unit = ClusterUnit::lineages;
    else u.fail("expected \"sites\" or \"lineages\"");
  }
  if (e.has("nu")) {
    x.nu = e.at("nu").number();
    if (!(*x.nu > 0.0)) e.at("nu").fail("must be > 0");
  }
  if (e.has("c_hat")) {
    x.c_hat = e.at("c_hat").number();
    if (!(*x.c_hat > 0.0)) e.at("c_hat").fail("must be > 0");
  }
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    int line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    const auto p = what.find("syntax error");
    throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                              (p == std::string::npos ? "" : ": " + what.substr(p)),
                      line, col);
  }
  return parse_config_json(j);
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const KernelSpec& k) {
  using nlohmann::json;
  switch (k.kind) {
    case KernelSpec::Kind::nearest_neighbour: return "nearest_neighbour";
    case KernelSpec::Kind::uniform_box: return json{{"uniform_box", k.radius}};
    case KernelSpec::Kind::pairs: {
      json a = json::array();
      for (const auto& [v, w] : k.pairs) a.push_back(json::array({json(std::vector<int>(v.begin(), v.end())), w}));
      return json{{"pairs", a}};
    }
  }
  return nullptr;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  auto births = [](const std::vector<Birth>& bs) {
    json a = json::array();
    for (const auto& b : bs) a.push_back(json::array({b.k, b.l, b.rate}));
    return a;
  };
  json m{{"dim", c.model.dim},
         {"type1", {{"kappa", c.model.walk1.kappa}, {"kernel", to_json(c.model.walk1.kernel)}}},
         {"type2", {{"kappa", c.model.walk2.kappa}, {"kernel", to_json(c.model.walk2.kernel)}}}};
  if (c.model.law) {
    const auto& l = *c.model.law;
    m["law"] = {{"mu1", l.mu1},
                {"mu2", l.mu2},
                {"conversion_rate", l.conversion_rate},
                {"beta1", births(l.beta1)},
                {"beta2", births(l.beta2)}};
  }
  if (c.model.epidemic) {
    const auto& l = *c.model.epidemic;
    json inf = json::array();
    for (const auto& [n, b] : l.infection) inf.push_back(json::array({n, b}));
    m["epidemic"] = {{"mu1", l.mu1}, {"mu2", l.mu2}, {"conversion_rate", l.conversion_rate}, {"infection", inf}};
  }
  const auto& x = c.experiment;
  json init = json::array();
  for (const auto& b : x.initial) {
    json o{{"type", b.type}};
    if (b.cube) {
      o["cube"] = json::array({b.cube->first, b.cube->second});
    } else {
      o["x"] = std::vector<int>(b.x.begin(), b.x.end());
      o["count"] = b.count;
    }
    init.push_back(o);
  }
  json e{{"T", x.horizon},
         {"t_list", x.t_list},
         {"replicas", x.replicas},
         {"seed", x.seed},
         {"box_radius", x.box_radius},
         {"grid_nodes", x.grid_nodes},
         {"corr_box", x.corr_box},
         {"out", x.out},
         {"initial", init},
         {"event_cap", x.event_cap},
         {"gap_tolerance", x.gap_tolerance},
         {"cluster_type", x.cluster_type},
         {"cluster_unit", x.cluster_unit == ClusterUnit::sites ? "sites" : "lineages"}};
  if (x.nu) e["nu"] = *x.nu;
  if (x.c_hat) e["c_hat"] = *x.c_hat;
  return json{{"model", m}, {"experiment", e}};
}

inline std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

// FNV-1a over the canonical serialization
inline std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Figure presets

inline RunConfig preset_fig_z1() {
  RunConfig c;
  c.model.dim = 1;
  c.model.walk1 = {1.0, {KernelSpec::Kind::nearest_neighbour, 1, {}}};
  c.model.walk2 = {4.0, {KernelSpec::Kind::uniform_box, 3, {}}};
  const auto law = figure_critical_law();
  c.model.law = LawSpec{law.mu(1), law.mu(2), law.conversion_rate(), law.beta(1), law.beta(2)};
  c.experiment.horizon = 200.0;
  c.experiment.t_list = {0.0, 20.0, 50.0, 100.0, 150.0, 200.0};
  c.experiment.initial = {InitialSpec{1, origin(1), 1, std::make_pair<std::int64_t, std::int64_t>(0, 299)}};
  c.experiment.out = "out/fig-z1";
  return c;
}

inline RunConfig preset_fig_z2() {
  RunConfig c;
  c.model.dim = 2;
  c.model.walk1 = {1.0, {KernelSpec::Kind::uniform_box, 4, {}}};
  c.model.walk2 = {1.0, {KernelSpec::Kind::uniform_box, 2, {}}};
  EpidemicLaw e;
  e.mu1 = 0.05;
  e.mu2 = 0.0;
  e.infection = {{2, 0.5}};
  e.conversion_rate = 0.45;
  c.model.epidemic = e;
  c.experiment.horizon = 20.0;
  c.experiment.t_list = {0.0, 2.0, 5.0, 10.0, 15.0, 20.0};
  c.experiment.initial = {InitialSpec{1, origin(2), 200, std::nullopt}};
  c.experiment.out = "out/fig-z2";
  return c;
}

inline std::vector<std::string> preset_names() { return {"fig-z1", "fig-z2"}; }

inline RunConfig preset(const std::string& name) {
  if (name == "fig-z1") return preset_fig_z1();
  if (name == "fig-z2") return preset_fig_z2();
  throw ConfigError("preset", "unknown preset '" + name + "' (known: fig-z1, fig-z2)");
}

}  // namespace brw
