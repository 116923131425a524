#pragma once

// Batch experiment driver behind the connection-lab tool.
//
// A run reads a JSON config, validates it completely, computes, and writes
//   <output>/report.json        config echo, results, assertions, timestamp
//   <output>/tables/*.csv       fixed columns per experiment
//   <output>/solver_log.json    find_copy only
//   <output>/fields/*.json      when dump_fields is true
// Exit codes: 0 all assertions pass, 1 an assertion failed, 2 bad config,
// 3 I/O failure.

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "connlab/copy_solver.hpp"
#include "connlab/serialization.hpp"
#include "connlab/witnesses.hpp"

namespace connlab {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"validate_algebra", "verify_identities", "line_scan", "classify",
                                                 "find_directions",  "find_copy",         "convergence"};
  return names;
}

inline constexpr const char* kSchemaHelp = R"(Config schema (JSON object; unknown keys are rejected):
  experiment      string, optional; must match the positional experiment
  algebra         "u1" | "su2" | "su3"                              (required)
  domain          object, required except for validate_algebra
    dim           2..4                                              (required)
    backend       "polynomial" | "grid"                             (required)
    n             grid sites per axis, even, >= 4                   (grid, required)
    box_length    grid period L > 0                                 (grid, default 1)
    sampling_points_per_axis   norm lattice size m >= 4             (polynomial, default 4)
  instance        object with "name" and parameters             (default {"name": "random"})
    random                    A, K random smooth forms from the seed
    zero                      A = 0, K = 0
    single_generator          axis (default 2; 0 for u1)
    vacuum_pair               axis (default 2; 0 for u1), twist (default 0.4)
    generic_vacuum_pair       no parameters
    stabilizer_copy           c (default 1), amplitude (default 1), constant_alpha (default false)
    files                     connection (path), direction (path, optional)
  solver          object, optional
    max_iterations            default 200
    residual_target           default 1e-10
    step_damping              default 1e-3
    singular_value_cutoff     default 1e-8 (relative to the largest)
    dense_svd_max_columns     default 2000
    directions                number of directions to return, default 12
    perturbation              relative size of the find_copy start perturbation, default 0.01
    jacobian_probes           default 5
  seed            unsigned 64-bit integer, default 0
  tolerance       number > 0, optional; experiment default otherwise
  output_dir      string, default "connection-lab-out"
  samples         random draws for verify_identities, default 1
  t_values        array of numbers (line parameters)
  grid_sizes      array of grid sizes for convergence, default [8, 16, 32]
  dump_fields     bool, default false
  expect          object, optional
    verdict       "AllCopies" | "EndpointsOnly" | "NotCopyPair"
    min_order     convergence order threshold, default 1.9
    min_nullity   certified null-space dimension threshold, default 1

Default tolerances: validate_algebra, verify_identities, line_scan 1e-12;
classify 1e-8 (polynomial) or 1e-4 (grid); find_directions 1e-8 (field
residual); find_copy 1e-9 (curvature oracle).

Tables (17 significant digits):
  validate_algebra   algebra_checks.csv (check,residual), structure_constants.csv (a,b,c,f)
  verify_identities  identities.csv (sample,identity,t,absolute,relative,asserted)
  line_scan          line_scan.csv (t,curvature_shift,closed_form_residual,derivative_residual)
  classify           line_sweep.csv (t,curvature_shift)
  find_directions    directions.csv (index,singular_value,field_residual,self_wedge,below_cutoff,certified)
  find_copy          solver_log.csv (iter,residual,damping,step_norm,accepted)
  convergence        convergence.csv (n,h,bianchi,ddk)

Environment: CONNECTION_LAB_THREADS caps worker threads (default 1).
)";

class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, int line, int column)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

struct ExperimentConfig {
  std::string experiment;
  AlgebraName algebra = AlgebraName::su2;
  std::optional<Domain> domain;
  Json instance = Json{{"name", "random"}};
  SolverOptions solver;
  int directions = 12;
  double perturbation = 0.01;
  int jacobian_probes = 5;
  std::uint64_t seed = 0;
  std::optional<double> tolerance;
  std::string output_dir = "connection-lab-out";
  int samples = 1;
  std::vector<double> t_values;
  std::vector<int> grid_sizes = {8, 16, 32};
  bool dump_fields = false;
  std::optional<Verdict> expect_verdict;
  double expect_min_order = 1.9;
  int expect_min_nullity = 1;

  // The resolved config, defaults filled in. output_dir is left out so that
  // reports written to different places compare equal.
  Json echo() const {
    Json j;
    j["experiment"] = experiment;
    j["algebra"] = std::string(to_string(algebra));
    if (domain) {
      Json d{{"dim", domain->dim}, {"backend", std::string(to_string(domain->backend))}};
      if (domain->backend == Backend::Grid) {
        d["n"] = domain->sites_per_axis;
        d["box_length"] = domain->box_length;
      } else {
        d["sampling_points_per_axis"] = domain->sampling_points_per_axis;
      }
      j["domain"] = d;
    }
    j["instance"] = instance;
    j["solver"] = Json{{"max_iterations", solver.max_iterations},
                       {"residual_target", solver.residual_target},
                       {"step_damping", solver.step_damping},
                       {"singular_value_cutoff", solver.singular_value_cutoff},
                       {"dense_svd_max_columns", solver.dense_svd_max_columns},
                       {"directions", directions},
                       {"perturbation", perturbation},
                       {"jacobian_probes", jacobian_probes}};
    j["seed"] = seed;
    j["tolerance"] = tolerance ? Json(*tolerance) : Json(nullptr);
    j["samples"] = samples;
    j["t_values"] = t_values;
    j["grid_sizes"] = grid_sizes;
    j["dump_fields"] = dump_fields;
    Json e{{"min_order", expect_min_order}, {"min_nullity", expect_min_nullity}};
    e["verdict"] = expect_verdict ? Json(std::string(to_string(*expect_verdict))) : Json(nullptr);
    j["expect"] = e;
    return j;
  }
};

// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
};

namespace detail {

inline std::pair<int, int> line_column(const std::string& text, std::size_t offset) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Walks a config while tracking where each key sits in the source text.
class SchemaWalker {
 public:
  explicit SchemaWalker(const std::string& text) : text_(text) {}

  // Position of the key at `path`, found by scanning for each quoted key in
  // turn after the previous one. Falls back to the start of the document.
  std::pair<int, int> locate(const std::vector<std::string>& path) const {
    std::size_t cursor = 0;
    std::size_t found = 0;
    for (const auto& key : path) {
      const std::string quoted = "\"" + key + "\"";
      std::size_t pos = cursor;
      for (;;) {
        pos = text_.find(quoted, pos);
        if (pos == std::string::npos) return line_column(text_, found);
        std::size_t after = pos + quoted.size();
        while (after < text_.size() && std::isspace(static_cast<unsigned char>(text_[after]))) ++after;
        if (after < text_.size() && text_[after] == ':') break;
        pos += quoted.size();
      }
      found = pos;
      cursor = pos + quoted.size();
    }
    return line_column(text_, found);
  }

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
    const auto [line, col] = locate(path);
    std::string where;
    for (const auto& p : path) where += (where.empty() ? "" : ".") + p;
    throw SchemaError((where.empty() ? msg : where + ": " + msg), line, col);
  }

  void only_keys(const Json& obj, const std::vector<std::string>& path, const std::vector<std::string>& allowed) const {
    if (!obj.is_object()) fail(path, "must be an object");
    for (const auto& [k, v] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        auto p = path;
        p.push_back(k);
        fail(p, "unknown key");
      }
    }
  }

  std::string string_at(const Json& obj, const std::vector<std::string>& path) const {
    const Json& v = obj.at(path.back());
    if (!v.is_string()) fail(path, "must be a string");
    return v.get<std::string>();
  }

  long long int_at(const Json& obj, const std::vector<std::string>& path, long long lo, long long hi) const {
    const Json& v = obj.at(path.back());
    if (!v.is_number_integer()) fail(path, "must be an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi)) {
      fail(path, "must be at most " + std::to_string(hi));
    }
    const auto x = v.get<long long>();
    if (x < lo || x > hi) fail(path, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }

  double number_at(const Json& obj, const std::vector<std::string>& path, bool positive) const {
    const Json& v = obj.at(path.back());
    if (!v.is_number()) fail(path, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    if (positive && !(x > 0.0)) fail(path, "must be positive");
    return x;
  }

  bool bool_at(const Json& obj, const std::vector<std::string>& path) const {
    const Json& v = obj.at(path.back());
    if (!v.is_boolean()) fail(path, "must be true or false");
    return v.get<bool>();
  }

 private:
  const std::string& text_;
};

}  // namespace detail

inline bool needs_grid(const std::string& experiment) {
  return experiment == "find_directions" || experiment == "find_copy" || experiment == "convergence";
}

// Parses and validates a config. Throws SchemaError with a source position.
inline ExperimentConfig parse_config(const std::string& text, const std::string& experiment,
                                     const ConfigOverrides& overrides = {}) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw SchemaError(std::string("malformed JSON: ") + e.what(), line, col);
  }
  const detail::SchemaWalker w(text);
  if (std::find(experiment_names().begin(), experiment_names().end(), experiment) == experiment_names().end()) {
    throw SchemaError("unknown experiment '" + experiment + "'", 0, 0);
  }
  w.only_keys(root, {}, {"experiment", "algebra", "domain", "instance", "solver", "seed", "tolerance", "output_dir",
                         "samples", "t_values", "grid_sizes", "dump_fields", "expect"});
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  if (root.contains("experiment") && w.string_at(root, {"experiment"}) != experiment) {
    w.fail({"experiment"}, "does not match the experiment on the command line ('" + experiment + "')");
  }
  if (!root.contains("algebra")) w.fail({}, "missing required key 'algebra'");
  try {
    cfg.algebra = parse_algebra_name(w.string_at(root, {"algebra"}));
  } catch (const ConfigurationError&) {
    w.fail({"algebra"}, "must be one of u1, su2, su3");
  }
  const auto alg = shared_algebra(cfg.algebra);

  if (root.contains("domain")) {
    const Json& d = root.at("domain");
    w.only_keys(d, {"domain"}, {"dim", "backend", "n", "box_length", "sampling_points_per_axis"});
    if (!d.contains("dim")) w.fail({"domain"}, "missing required key 'dim'");
    if (!d.contains("backend")) w.fail({"domain"}, "missing required key 'backend'");
    const int dim = static_cast<int>(w.int_at(d, {"domain", "dim"}, 2, kMaxDim));
    Backend backend{};
    try {
      backend = parse_backend(w.string_at(d, {"domain", "backend"}));
    } catch (const ConfigurationError&) {
      w.fail({"domain", "backend"}, "must be \"polynomial\" or \"grid\"");
    }
    if (backend == Backend::Grid) {
      if (d.contains("sampling_points_per_axis")) w.fail({"domain", "sampling_points_per_axis"}, "not valid for grid");
      if (!d.contains("n")) w.fail({"domain"}, "grid needs 'n'");
      const int n = static_cast<int>(w.int_at(d, {"domain", "n"}, 4, 4096));
      if (n % 2 != 0) w.fail({"domain", "n"}, "must be even");
      const double l = d.contains("box_length") ? w.number_at(d, {"domain", "box_length"}, true) : 1.0;
      cfg.domain = Domain::grid(dim, n, l);
    } else {
      if (d.contains("n")) w.fail({"domain", "n"}, "not valid for polynomial");
      if (d.contains("box_length")) w.fail({"domain", "box_length"}, "not valid for polynomial");
      const int m = d.contains("sampling_points_per_axis")
                        ? static_cast<int>(w.int_at(d, {"domain", "sampling_points_per_axis"}, 4, 64))
                        : 4;
      cfg.domain = Domain::polynomial(dim, m);
    }
  } else if (experiment != "validate_algebra") {
    w.fail({}, "missing required key 'domain'");
  }
  if (cfg.domain && needs_grid(experiment) && cfg.domain->backend != Backend::Grid) {
    w.fail({"domain", "backend"}, experiment + " needs the grid backend");
  }

  if (root.contains("instance")) {
    const Json& in = root.at("instance");
    if (!in.is_object() || !in.contains("name")) w.fail({"instance"}, "must be an object with a 'name'");
    const std::string name = w.string_at(in, {"instance", "name"});
    const int default_axis = alg->dim() > 2 ? 2 : 0;
    Json resolved{{"name", name}};
    auto axis_of = [&]() {
      const int axis = in.contains("axis") ? static_cast<int>(w.int_at(in, {"instance", "axis"}, 0, alg->dim() - 1))
                                           : default_axis;
      resolved["axis"] = axis;
    };
    auto nonabelian = [&]() {
      if (alg->dim() < 3) w.fail({"instance", "name"}, name + " needs su2 or su3");
    };
    if (name == "random" || name == "zero" || name == "generic_vacuum_pair") {
      w.only_keys(in, {"instance"}, {"name"});
      if (name == "generic_vacuum_pair") nonabelian();
    } else if (name == "single_generator") {
      w.only_keys(in, {"instance"}, {"name", "axis"});
      axis_of();
    } else if (name == "vacuum_pair") {
      w.only_keys(in, {"instance"}, {"name", "axis", "twist"});
      axis_of();
      resolved["twist"] = in.contains("twist") ? w.number_at(in, {"instance", "twist"}, false) : 0.4;
    } else if (name == "stabilizer_copy") {
      w.only_keys(in, {"instance"}, {"name", "c", "amplitude", "constant_alpha"});
      nonabelian();
      resolved["c"] = in.contains("c") ? w.number_at(in, {"instance", "c"}, false) : 1.0;
      resolved["amplitude"] = in.contains("amplitude") ? w.number_at(in, {"instance", "amplitude"}, false) : 1.0;
      resolved["constant_alpha"] = in.contains("constant_alpha") ? w.bool_at(in, {"instance", "constant_alpha"}) : false;
    } else if (name == "files") {
      w.only_keys(in, {"instance"}, {"name", "connection", "direction"});
      if (!in.contains("connection")) w.fail({"instance"}, "files needs 'connection'");
      resolved["connection"] = w.string_at(in, {"instance", "connection"});
      if (in.contains("direction")) resolved["direction"] = w.string_at(in, {"instance", "direction"});
    } else {
      w.fail({"instance", "name"}, "unknown instance '" + name + "'");
    }
    cfg.instance = std::move(resolved);
  }

  if (root.contains("solver")) {
    const Json& s = root.at("solver");
    w.only_keys(s, {"solver"}, {"max_iterations", "residual_target", "step_damping", "singular_value_cutoff",
                                "dense_svd_max_columns", "directions", "perturbation", "jacobian_probes"});
    if (s.contains("max_iterations")) cfg.solver.max_iterations = static_cast<int>(w.int_at(s, {"solver", "max_iterations"}, 1, 1000000));
    if (s.contains("residual_target")) cfg.solver.residual_target = w.number_at(s, {"solver", "residual_target"}, true);
    if (s.contains("step_damping")) cfg.solver.step_damping = w.number_at(s, {"solver", "step_damping"}, true);
    if (s.contains("singular_value_cutoff")) cfg.solver.singular_value_cutoff = w.number_at(s, {"solver", "singular_value_cutoff"}, true);
    if (s.contains("dense_svd_max_columns")) cfg.solver.dense_svd_max_columns = w.int_at(s, {"solver", "dense_svd_max_columns"}, 1, 1000000);
    if (s.contains("directions")) cfg.directions = static_cast<int>(w.int_at(s, {"solver", "directions"}, 1, 100000));
    if (s.contains("perturbation")) cfg.perturbation = w.number_at(s, {"solver", "perturbation"}, false);
    if (s.contains("jacobian_probes")) cfg.jacobian_probes = static_cast<int>(w.int_at(s, {"solver", "jacobian_probes"}, 1, 1000));
  }
  if (root.contains("seed")) {
    const Json& v = root.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      w.fail({"seed"}, "must be a non-negative integer");
    }
    cfg.seed = v.get<std::uint64_t>();
  }
  if (root.contains("tolerance")) cfg.tolerance = w.number_at(root, {"tolerance"}, true);
  if (root.contains("output_dir")) cfg.output_dir = w.string_at(root, {"output_dir"});
  if (root.contains("samples")) cfg.samples = static_cast<int>(w.int_at(root, {"samples"}, 1, 10000));
  if (root.contains("t_values")) {
    const Json& t = root.at("t_values");
    if (!t.is_array() || t.empty()) w.fail({"t_values"}, "must be a non-empty array of numbers");
    for (const auto& v : t) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) w.fail({"t_values"}, "must contain finite numbers only");
      cfg.t_values.push_back(v.get<double>());
    }
  }
  if (root.contains("grid_sizes")) {
    const Json& g = root.at("grid_sizes");
    if (!g.is_array() || g.size() < 2) w.fail({"grid_sizes"}, "must be an array of at least two sizes");
    cfg.grid_sizes.clear();
    for (const auto& v : g) {
      if (!v.is_number_integer() || v.get<long long>() < 4 || v.get<long long>() > 4096 || v.get<long long>() % 2 != 0) {
        w.fail({"grid_sizes"}, "sizes must be even integers in [4, 4096]");
      }
      cfg.grid_sizes.push_back(v.get<int>());
    }
  }
  if (root.contains("dump_fields")) cfg.dump_fields = w.bool_at(root, {"dump_fields"});
  if (root.contains("expect")) {
    const Json& e = root.at("expect");
    w.only_keys(e, {"expect"}, {"verdict", "min_order", "min_nullity"});
    if (e.contains("verdict")) {
      try {
        cfg.expect_verdict = parse_verdict(w.string_at(e, {"expect", "verdict"}));
      } catch (const ConfigurationError&) {
        w.fail({"expect", "verdict"}, "must be AllCopies, EndpointsOnly or NotCopyPair");
      }
    }
    if (e.contains("min_order")) cfg.expect_min_order = w.number_at(e, {"expect", "min_order"}, false);
    if (e.contains("min_nullity")) cfg.expect_min_nullity = static_cast<int>(w.int_at(e, {"expect", "min_nullity"}, 0, 1000000));
  }

  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.tolerance) {
    if (!(*overrides.tolerance > 0.0) || !std::isfinite(*overrides.tolerance)) {
      throw SchemaError("--tolerance must be a positive number", 0, 0);
    }
    cfg.tolerance = *overrides.tolerance;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Experiments

struct Assertion {
  std::string criterion;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string comparison;  // "<=" or ">="
};

struct ExperimentOutput {
  Json results = Json::object();
  std::vector<Assertion> assertions;
  std::vector<std::pair<std::string, CsvTable>> tables;
  std::optional<Json> solver_log;
  std::vector<std::pair<std::string, Json>> fields;

  void at_most(const std::string& name, double value, double threshold) {
    assertions.push_back({name, value, threshold, value <= threshold, "<="});
  }
  void at_least(const std::string& name, double value, double threshold) {
    assertions.push_back({name, value, threshold, value >= threshold, ">="});
  }
  void holds(const std::string& name, bool ok) { assertions.push_back({name, ok ? 1.0 : 0.0, 1.0, ok, "=="}); }
};

namespace detail {

template <class Field>
struct Instance {
  Connection<Field> base;
  FormField<Field> direction;
  std::optional<Verdict> expected;
};

template <class Field>
Instance<Field> build_instance(const ExperimentConfig& cfg, std::uint64_t sample = 0) {
  const Domain& dom = *cfg.domain;
  const auto g = shared_algebra(cfg.algebra);
  const Json& in = cfg.instance;
  const std::string name = in.at("name").get<std::string>();
  auto from = [&](Witness<Field> w) {
    return Instance<Field>{std::move(w.base), std::move(w.direction), cfg.expect_verdict.value_or(w.expected)};
  };
  if (name == "random") {
    CounterRng rng(cfg.seed, sample);
    auto a = random_smooth_form<Field>(dom, g, 1, rng);
    auto k = random_smooth_form<Field>(dom, g, 1, rng);
    return {Connection<Field>(std::move(a)), std::move(k), cfg.expect_verdict.value_or(Verdict::NotCopyPair)};
  }
  if (name == "zero") {
    return {Connection<Field>::zero(dom, g), FormField<Field>::zero(dom, g, 1), cfg.expect_verdict};
  }
  if (name == "single_generator") return from(single_generator_witness<Field>(dom, g, in.at("axis").get<int>()));
  if (name == "vacuum_pair") {
    return from(vacuum_witness<Field>(dom, g, in.at("axis").get<int>(), in.at("twist").get<double>()));
  }
  if (name == "generic_vacuum_pair") return from(generic_vacuum_pair<Field>(dom, g));
  if (name == "stabilizer_copy") {
    return from(stabilizer_witness<Field>(dom, g, in.at("c").get<double>(), in.at("amplitude").get<double>(),
                                          in.at("constant_alpha").get<bool>()));
  }
  // files
  auto a = load_form<Field>(in.at("connection").get<std::string>());
  auto k = in.contains("direction") ? load_form<Field>(in.at("direction").get<std::string>())
                                    : FormField<Field>::zero(a.domain(), a.algebra_ptr(), 1);
  if (!(a.domain() == dom) || a.algebra().name() != cfg.algebra || a.degree() != 1) {
    throw ConfigurationError("instance files: connection does not match the configured algebra/domain or is not a 1-form");
  }
  a.require_same_space(k, "instance files");
  return {Connection<Field>(std::move(a)), std::move(k), cfg.expect_verdict};
}

inline ExperimentOutput run_validate_algebra(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(1e-12);
  const auto g = shared_algebra(cfg.algebra);
  const auto v = g->validate();
  CsvTable checks({"check", "residual"});
  const std::vector<std::pair<std::string, double>> rows = {{"closure", v.closure},
                                                            {"antisymmetry", v.antisymmetry},
                                                            {"jacobi", v.jacobi},
                                                            {"anti_hermitian", v.anti_hermitian},
                                                            {"orthogonality", v.orthogonality}};
  for (const auto& [k, x] : rows) {
    checks.add_row({k, x});
    out.results[k] = x;
  }
  out.results["dim"] = g->dim();
  out.results["rep_dim"] = g->rep_dim();
  CsvTable f({"a", "b", "c", "f"});
  for (int a = 0; a < g->dim(); ++a) {
    for (int b = 0; b < g->dim(); ++b) {
      for (int c = 0; c < g->dim(); ++c) {
        if (g->f(a, b, c) != 0.0) f.add_row({static_cast<long long>(a + 1), static_cast<long long>(b + 1), static_cast<long long>(c + 1), g->f(a, b, c)});
      }
    }
  }
  out.tables.emplace_back("algebra_checks", std::move(checks));
  out.tables.emplace_back("structure_constants", std::move(f));
  out.at_most("algebra_invariants", v.worst(), tol);
  return out;
}

template <class Field>
ExperimentOutput run_verify_identities(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(1e-12);
  const bool exact = Field::backend == Backend::Polynomial;
  const std::vector<double> ts = cfg.t_values.empty() ? std::vector<double>{-0.7, 0.3, 2.5} : cfg.t_values;
  CsvTable table({"sample", "identity", "t", "absolute", "relative", "asserted"});
  std::map<std::string, double> worst;
  auto record = [&](int s, const std::string& id, double t, const IdentityCheck& c, bool asserted) {
    table.add_row({static_cast<long long>(s), id, t, c.absolute, c.relative, std::string(asserted ? "1" : "0")});
    if (asserted) worst[id] = std::max(worst[id], c.relative);
  };
  Json samples = Json::array();
  for (int s = 0; s < cfg.samples; ++s) {
    const auto inst = build_instance<Field>(cfg, static_cast<std::uint64_t>(s));
    const LineFamily<Field> line(inst.base, inst.direction);
    Json js{{"sample", s}};
    const auto e1 = check_dsharp_k(inst.base, inst.direction);
    const auto e2 = check_curvature_shift(inst.base, inst.direction);
    const auto e3 = check_ddk(inst.base, inst.direction);
    const auto bi = check_bianchi(inst.base);
    record(s, "dsharp_k", 0.0, e1, true);
    record(s, "curvature_shift", 0.0, e2, true);
    record(s, "ddk_plus_commutator", 0.0, e3, exact && !e3.degenerate_dimension);
    record(s, "bianchi", 0.0, bi, exact && !bi.degenerate_dimension);
    js["dsharp_k"] = to_json(e1);
    js["curvature_shift"] = to_json(e2);
    js["ddk_plus_commutator"] = to_json(e3);
    js["bianchi"] = to_json(bi);
    Json lines = Json::array();
    for (double t : ts) {
      const auto c7 = check_line_curvature(line, t);
      const auto c6 = check_line_covariant_derivative(line, t);
      record(s, "line_curvature", t, c7, true);
      record(s, "line_covariant_derivative", t, c6, true);
      lines.push_back(Json{{"t", t}, {"line_curvature", to_json(c7)}, {"line_covariant_derivative", to_json(c6)}});
    }
    js["lines"] = std::move(lines);
    samples.push_back(std::move(js));
  }
  out.results["samples"] = std::move(samples);
  out.results["leibniz_identities_asserted"] = exact;
  for (const auto& [id, x] : worst) out.at_most(id, x, tol);
  out.tables.emplace_back("identities", std::move(table));
  return out;
}

template <class Field>
ExperimentOutput run_line_scan(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(1e-12);
  std::vector<double> ts = cfg.t_values;
  if (ts.empty()) {
    for (int i = -4; i <= 8; ++i) ts.push_back(0.25 * i);
  }
  const auto inst = build_instance<Field>(cfg);
  const LineFamily<Field> line(inst.base, inst.direction);
  CsvTable table({"t", "curvature_shift", "closed_form_residual", "derivative_residual"});
  double worst7 = 0.0;
  double worst6 = 0.0;
  for (double t : ts) {
    const double shift = l2_norm(curvature(line.eval(t)) - line.curvature_base());
    const auto c7 = check_line_curvature(line, t);
    const auto c6 = check_line_covariant_derivative(line, t);
    worst7 = std::max(worst7, c7.relative);
    worst6 = std::max(worst6, c6.relative);
    table.add_row({t, shift, c7.relative, c6.relative});
  }
  const auto taxon = classify_direction(line, default_tolerance(Field::backend));
  out.results["taxon"] = Json{{"kind", std::string(to_string(taxon.kind))},
                              {"copy_parameter", std::isnan(taxon.copy_parameter) ? Json(nullptr) : Json(taxon.copy_parameter)},
                              {"residual", taxon.residual}};
  out.results["dk_norm"] = l2_norm(line.dk());
  out.results["kk_norm"] = l2_norm(line.kk());
  out.results["max_closed_form_residual"] = worst7;
  out.results["max_derivative_residual"] = worst6;
  out.at_most("line_curvature", worst7, tol);
  out.at_most("line_covariant_derivative", worst6, tol);
  out.tables.emplace_back("line_scan", std::move(table));
  return out;
}

template <class Field>
ExperimentOutput run_classify(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(default_tolerance(Field::backend));
  std::vector<double> ts = cfg.t_values;
  if (ts.empty()) {
    for (int i = 1; i <= 9; ++i) ts.push_back(0.1 * i);
  }
  const auto inst = build_instance<Field>(cfg);
  const LineFamily<Field> line(inst.base, inst.direction);
  const auto report = classify_line(line, tol, cfg.instance.at("name").get<std::string>());
  const auto sweep = curvature_sweep(line, ts);
  CsvTable table({"t", "curvature_shift"});
  double max_shift = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    table.add_row({ts[i], sweep[i]});
    max_shift = std::max(max_shift, sweep[i]);
  }
  out.results["report"] = to_json(report);
  out.results["max_curvature_shift"] = max_shift;
  out.results["expected"] = inst.expected ? Json(std::string(to_string(*inst.expected))) : Json(nullptr);
  if (inst.expected) out.holds("verdict_" + std::string(to_string(*inst.expected)), report.verdict == *inst.expected);
  if (report.verdict == Verdict::AllCopies) out.at_most("line_is_flat", max_shift, tol);
  if (report.verdict != Verdict::NotCopyPair) out.at_most("midpoint_identity", report.midpoint_check, tol);
  out.tables.emplace_back("line_sweep", std::move(table));
  if (cfg.dump_fields) {
    out.fields.emplace_back("connection", form_to_json(inst.base.form()));
    out.fields.emplace_back("direction", form_to_json(inst.direction));
  }
  return out;
}

inline Json log_to_json(const std::vector<IterationRecord>& log) {
  Json j = Json::array();
  for (const auto& r : log) {
    j.push_back(Json{{"iter", r.iter}, {"residual", r.residual}, {"damping", r.damping}, {"step_norm", r.step_norm}});
  }
  return j;
}

inline ExperimentOutput run_find_directions(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(1e-8);
  const auto inst = build_instance<GridField>(cfg);
  DirectionsResult res;
  bool converged = true;
  try {
    res = infinitesimal_copy_directions(inst.base, cfg.directions, cfg.solver);
  } catch (const SpectrumNotConverged& e) {
    res = e.partial();
    converged = false;
  }
  CsvTable table({"index", "singular_value", "field_residual", "self_wedge", "below_cutoff", "certified"});
  double worst = 0.0;
  for (std::size_t i = 0; i < res.directions.size(); ++i) {
    const auto& d = res.directions[i];
    table.add_row({static_cast<long long>(i), d.singular_value, d.field_residual, d.self_wedge,
                   static_cast<long long>(d.below_cutoff), static_cast<long long>(d.certified)});
    if (d.below_cutoff) worst = std::max(worst, d.field_residual);
    if (cfg.dump_fields) out.fields.emplace_back("direction_" + std::to_string(i), form_to_json(d.direction));
  }
  out.results["method"] = res.method;
  out.results["largest_singular_value"] = res.largest_singular_value;
  out.results["cutoff"] = res.cutoff;
  out.results["nullity"] = res.nullity;
  out.results["full_spectrum"] = res.full_spectrum;
  out.results["certified_null_directions"] = res.certified_null_count();
  out.results["converged"] = converged;
  out.holds("spectrum_converged", converged);
  out.at_least("certified_null_dimension", static_cast<double>(res.certified_null_count()), cfg.expect_min_nullity);
  out.at_most("null_direction_field_residual", worst, tol);
  out.tables.emplace_back("directions", std::move(table));
  return out;
}

inline ExperimentOutput run_find_copy(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const double tol = cfg.tolerance.value_or(1e-9);
  const auto inst = build_instance<GridField>(cfg);
  CounterRng rng(cfg.seed, 2);
  const auto noise = random_grid_noise(*cfg.domain, inst.base.algebra_ptr(), 1, rng);
  const double kn = l2_norm(inst.direction);
  const double scale = cfg.perturbation * (kn > 0.0 ? kn : 1.0) / l2_norm(noise);
  const GridForm k0 = inst.direction + scale * noise;
  const auto jac = jacobian_fd_check(inst.base, k0, cfg.jacobian_probes, 1e-5, cfg.seed);

  std::string failure = "none";
  const FindCopyResult res = [&] {
    try {
      return find_copy(inst.base, k0, cfg.solver);
    } catch (const FindCopyError& e) {
      failure = e.kind() == FindCopyError::Kind::IterationLimit ? "iteration_limit" : "stagnation";
      return e.partial();
    }
  }();
  const double final_residual = res.log.empty() ? copy_residuals(inst.base, res.k).copy : res.log.back().residual;
  CsvTable table({"iter", "residual", "damping", "step_norm", "accepted"});
  for (const auto& r : res.log) {
    table.add_row({static_cast<long long>(r.iter), r.residual, r.damping, r.step_norm, static_cast<long long>(r.accepted)});
  }
  out.solver_log = log_to_json(res.log);
  out.results["iterations"] = res.iterations;
  out.results["converged"] = res.converged;
  out.results["failure"] = failure;
  out.results["initial_residual"] = copy_residuals(inst.base, k0).copy;
  out.results["final_residual"] = final_residual;
  out.results["curvature_oracle"] = res.curvature_oracle;
  out.results["distance_to_start"] = l2_norm(res.k - k0);
  out.results["report"] = to_json(res.report);
  out.results["jacobian_max_relative_error"] = jac.max_relative_error;
  out.results["jacobian_probes"] = jac.probes;
  out.at_most("copy_residual", final_residual, cfg.solver.residual_target);
  out.at_most("curvature_oracle", res.curvature_oracle, tol);
  out.at_most("jacobian_vs_central_difference", jac.max_relative_error, 1e-6);
  out.tables.emplace_back("solver_log", std::move(table));
  if (cfg.dump_fields) {
    out.fields.emplace_back("connection", form_to_json(inst.base.form()));
    out.fields.emplace_back("k_initial", form_to_json(k0));
    out.fields.emplace_back("k_final", form_to_json(res.k));
  }
  return out;
}

// Least-squares slope of log(r) against log(h).
inline double regression_order(const std::vector<double>& h, const std::vector<double>& r) {
  const auto n = static_cast<double>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(r[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// log(r_i / r_{i+1}) / log(h_i / h_{i+1}) for successive refinements.
inline std::vector<double> log_ratio_orders(const std::vector<double>& h, const std::vector<double>& r) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < h.size(); ++i) out.push_back(std::log(r[i] / r[i + 1]) / std::log(h[i] / h[i + 1]));
  return out;
}

// The observed order is the log ratio of the two finest grids; the
// regression slope over all grids is reported alongside.
inline ExperimentOutput run_convergence(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const Domain& base = *cfg.domain;
  const auto g = shared_algebra(cfg.algebra);
  if (base.dim < 3) throw ConfigurationError("convergence: Bianchi and DDK residuals are vacuous for dim < 3");
  std::vector<int> sizes = cfg.grid_sizes;
  std::sort(sizes.begin(), sizes.end());
  if (std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end()) {
    throw ConfigurationError("convergence: grid_sizes must be distinct");
  }
  CounterRng rng(cfg.seed, 0);
  const auto a_series = random_trig_series(base, *g, 1, 2, rng);
  const auto k_series = random_trig_series(base, *g, 1, 2, rng);
  CsvTable table({"n", "h", "bianchi", "ddk"});
  std::vector<double> hs, bianchi, ddk;
  for (int n : sizes) {
    const auto dom = Domain::grid(base.dim, n, base.box_length);
    const GridConnection a(trig_form(dom, g, 1, a_series));
    const auto k = trig_form(dom, g, 1, k_series);
    const double b = check_bianchi(a).absolute;
    const double e = check_ddk(a, k).absolute;
    hs.push_back(dom.spacing());
    bianchi.push_back(b);
    ddk.push_back(e);
    table.add_row({static_cast<long long>(n), dom.spacing(), b, e});
  }
  for (double r : bianchi) {
    if (!(r > 0.0)) throw ConfigurationError("convergence: a residual is exactly zero; no order to fit");
  }
  for (double r : ddk) {
    if (!(r > 0.0)) throw ConfigurationError("convergence: a residual is exactly zero; no order to fit");
  }
  const auto ob = log_ratio_orders(hs, bianchi);
  const auto oe = log_ratio_orders(hs, ddk);
  out.results["grid_sizes"] = sizes;
  out.results["bianchi"] = bianchi;
  out.results["ddk"] = ddk;
  out.results["bianchi_pair_orders"] = ob;
  out.results["ddk_pair_orders"] = oe;
  out.results["bianchi_order"] = ob.back();
  out.results["ddk_order"] = oe.back();
  out.results["bianchi_regression_order"] = regression_order(hs, bianchi);
  out.results["ddk_regression_order"] = regression_order(hs, ddk);
  out.at_least("bianchi_order", ob.back(), cfg.expect_min_order);
  out.at_least("ddk_order", oe.back(), cfg.expect_min_order);
  out.tables.emplace_back("convergence", std::move(table));
  return out;
}

template <class Fn>
decltype(auto) dispatch_backend(const ExperimentConfig& cfg, Fn&& fn) {
  if (cfg.domain->backend == Backend::Polynomial) return fn(PolyField{});
  return fn(GridField{});
}

}  // namespace detail

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  const std::string& e = cfg.experiment;
  if (e == "validate_algebra") return detail::run_validate_algebra(cfg);
  if (e == "find_directions") return detail::run_find_directions(cfg);
  if (e == "find_copy") return detail::run_find_copy(cfg);
  if (e == "convergence") return detail::run_convergence(cfg);
  return detail::dispatch_backend(cfg, [&](auto tag) {
    using Field = decltype(tag);
    if (e == "verify_identities") return detail::run_verify_identities<Field>(cfg);
    if (e == "line_scan") return detail::run_line_scan<Field>(cfg);
    return detail::run_classify<Field>(cfg);
  });
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json build_report(const ExperimentConfig& cfg, const ExperimentOutput& out, const std::string& timestamp) {
  Json report;
  report["tool"] = "connection-lab";
  report["experiment"] = cfg.experiment;
  report["timestamp"] = timestamp;
  report["config"] = cfg.echo();
  report["results"] = out.results;
  Json asserts = Json::array();
  bool ok = true;
  for (const auto& a : out.assertions) {
    asserts.push_back(Json{{"criterion", a.criterion},
                           {"value", a.value},
                           {"comparison", a.comparison},
                           {"threshold", a.threshold},
                           {"passed", a.passed}});
    ok = ok && a.passed;
  }
  report["assertions"] = std::move(asserts);
  report["passed"] = ok;
  return report;
}

// Reads CONNECTION_LAB_THREADS; unset means 1.
inline int thread_cap() {
  const char* v = std::getenv("CONNECTION_LAB_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    throw ConfigurationError(std::string("CONNECTION_LAB_THREADS must be an integer in [1, 1024], got '") + v + "'");
  }
  return static_cast<int>(n);
}

// Runs a parsed config and writes its outputs. Returns the exit code.
inline int run(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  ExperimentOutput out;
  try {
    Eigen::setNbThreads(thread_cap());
    out = run_experiment(cfg);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigurationError& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConstructionError& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DomainMismatch& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedBackend& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TypeMismatch& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DegreeError& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir / "tables");
    write_text((dir / "report.json").string(), build_report(cfg, out, utc_timestamp()).dump(2) + "\n");
    for (const auto& [name, table] : out.tables) table.write((dir / "tables" / (name + ".csv")).string());
    if (out.solver_log) write_text((dir / "solver_log.json").string(), out.solver_log->dump(2) + "\n");
    if (!out.fields.empty()) {
      fs::create_directories(dir / "fields");
      for (const auto& [name, j] : out.fields) write_text((dir / "fields" / (name + ".json")).string(), j.dump(1) + "\n");
    }
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return 3;
  }

  int code = 0;
  for (const auto& a : out.assertions) {
    if (!a.passed) {
      log << "FAILED " << cfg.experiment << "." << a.criterion << ": " << format_double(a.value) << " " << a.comparison
          << " " << format_double(a.threshold) << " does not hold\n";
      code = 1;
    }
  }
  return code;
}

}  // namespace connlab
