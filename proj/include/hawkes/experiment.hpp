#pragma once

// Experiment orchestration: JSON config, replica pipelines per subcommand, and
// the result bundle (summary.json plus CSV artifacts).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hawkes/deviations.hpp"
#include "hawkes/engine.hpp"
#include "hawkes/error.hpp"
#include "hawkes/event_io.hpp"
#include "hawkes/fluct.hpp"
#include "hawkes/meanfield.hpp"
#include "hawkes/model.hpp"
#include "hawkes/parallel.hpp"

namespace hawkes {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"meanfield",  "simulate", "clt-check", "field-clt-check",
                                              "couple-scaling", "exp-moment", "mdp-rate", "mdp-field",
                                              "mdp-duality", "mdp-perturbed"};
  return names;
}

struct Thresholds {
  double variance_band = 0.10;  // relative, clt-check and field-clt-check
  double slope_min = -0.65;
  double slope_max = -0.35;
  double ci_z = 1.96;            // exp-moment slack multiplier on the standard error
  double duality_tol = 1e-6;     // |Ups - [psi, phi]| <= tol (1 + |[psi, phi]|)
  double rate_rel = 0.01;        // rate_field vs 1/2 [psi, psi], and contraction
  double homogeneity_tol = 1e-10;
  double lyapunov_rel = 1e-3;    // dense vs Lyapunov variance
  double se_multiple = 3.0;      // mdp-perturbed
};

struct EtaSpec {
  std::string type = "linear";  // linear | values | mu_psi
  double slope = 1.0;
  std::vector<double> values;
  std::string psi = "ell";
  bool ac = true;
};

struct ExperimentConfig {
  std::string command;
  Kernel kernel;
  RateFn rate = RateFn::constant(1.0);
  Json kernel_json = Json{{"type", "zero"}};
  Json rate_json = Json{{"type", "constant"}, {"value", 1.0}};
  double T = 1.0;
  double dt = 1e-3;
  std::size_t K = 0;  // 0: default_truncation(m_T)
  std::vector<std::uint32_t> N{1000};
  std::size_t replicas = 100;
  double gamma = 0.25;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string output = "out";
  std::vector<double> theta{0.01, 0.05};  // multiples of 1/N
  std::vector<std::string> psi{"ell", "ge1", "t_ell"};
  std::size_t state = 0;  // point mass tested by field-clt-check
  std::size_t variance_steps = 500;
  EtaSpec eta;
  Thresholds thresholds;
};

namespace detail {

inline std::string field_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

inline void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("field '" + field_path(path, key) + "': unknown key");
  }
}

inline const Json& require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("field '" + path + "': expected an object");
  return j;
}

inline double number(const Json& obj, const std::string& path, const char* key, std::optional<double> def) {
  const std::string p = field_path(path, key);
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError("field '" + p + "': required");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("field '" + p + "': expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError("field '" + p + "': must be finite");
  return x;
}

inline double positive(const Json& obj, const std::string& path, const char* key, std::optional<double> def) {
  const double x = number(obj, path, key, def);
  if (!(x > 0.0)) throw ConfigError("field '" + field_path(path, key) + "': must be > 0");
  return x;
}

inline std::uint64_t unsigned_int(const Json& obj, const std::string& path, const char* key, std::uint64_t def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError("field '" + field_path(path, key) + "': expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::vector<double> number_list(const Json& obj, const std::string& path, const char* key) {
  const std::string p = field_path(path, key);
  if (!obj.contains(key)) throw ConfigError("field '" + p + "': required");
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ConfigError("field '" + p + "': expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError("field '" + p + "[" + std::to_string(i) + "]': expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline std::string text(const Json& obj, const std::string& path, const char* key, const std::string& def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_string()) throw ConfigError("field '" + field_path(path, key) + "': expected a string");
  return obj.at(key).get<std::string>();
}

template <class Build>
auto build_model(const std::string& path, Build&& build) {
  try {
    return build();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("field '" + path + "': " + e.what());
  }
}

inline std::pair<Kernel, Json> parse_kernel(const Json& j, const std::string& path) {
  require_object(j, path);
  const std::string type = text(j, path, "type", "");
  if (type == "zero") {
    reject_unknown(j, path, {"type"});
    return {Kernel::zero(), Json{{"type", "zero"}}};
  }
  if (type == "exponential") {
    reject_unknown(j, path, {"type", "a", "b"});
    const double a = number(j, path, "a", std::nullopt), b = number(j, path, "b", std::nullopt);
    return {build_model(path, [&] { return Kernel::exponential(a, b); }), Json{{"type", type}, {"a", a}, {"b", b}}};
  }
  if (type == "constant") {
    reject_unknown(j, path, {"type", "c"});
    const double c = number(j, path, "c", std::nullopt);
    return {build_model(path, [&] { return Kernel::constant(c); }), Json{{"type", type}, {"c", c}}};
  }
  if (type == "tabulated") {
    reject_unknown(j, path, {"type", "times", "values"});
    auto t = number_list(j, path, "times"), v = number_list(j, path, "values");
    return {build_model(path, [&] { return Kernel::tabulated(t, v); }),
            Json{{"type", type}, {"times", t}, {"values", v}}};
  }
  throw ConfigError("field '" + field_path(path, "type") +
                    "': expected one of zero, exponential, constant, tabulated");
}

inline std::pair<RateFn, Json> parse_rate(const Json& j, const std::string& path) {
  require_object(j, path);
  const std::string type = text(j, path, "type", "");
  if (type == "affine") {
    reject_unknown(j, path, {"type", "base", "slope"});
    const double base = number(j, path, "base", std::nullopt), slope = number(j, path, "slope", std::nullopt);
    return {build_model(path, [&] { return RateFn::affine(base, slope); }),
            Json{{"type", type}, {"base", base}, {"slope", slope}}};
  }
  if (type == "constant") {
    reject_unknown(j, path, {"type", "value"});
    const double value = number(j, path, "value", std::nullopt);
    return {build_model(path, [&] { return RateFn::constant(value); }), Json{{"type", type}, {"value", value}}};
  }
  if (type == "tabulated") {
    reject_unknown(j, path, {"type", "x", "y"});
    auto x = number_list(j, path, "x"), y = number_list(j, path, "y");
    return {build_model(path, [&] { return RateFn::tabulated(x, y); }), Json{{"type", type}, {"x", x}, {"y", y}}};
  }
  throw ConfigError("field '" + field_path(path, "type") + "': expected one of affine, constant, tabulated");
}

inline const std::set<std::string>& psi_names() {
  static const std::set<std::string> names{"ell", "ge1", "ge2", "t_ell"};
  return names;
}

inline std::string check_psi(const Json& v, const std::string& path) {
  if (!v.is_string() || !psi_names().contains(v.get<std::string>()))
    throw ConfigError("field '" + path + "': expected one of ell, ge1, ge2, t_ell");
  return v.get<std::string>();
}

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

// Parses a JSON config. `command` fills the subcommand when the file has none.
// HAWKES_SEED in the environment overrides the seed field.
inline ExperimentConfig parse_config(const std::string& source, const std::string& command = {}) {
  Json j;
  try {
    j = Json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(source, e.byte);
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
  using namespace detail;
  require_object(j, "<root>");
  reject_unknown(j, "", {"command", "model", "T", "dt", "K", "N", "replicas", "gamma", "seed", "workers", "output",
                         "theta", "psi", "state", "variance_steps", "eta", "thresholds"});
  ExperimentConfig c;
  c.command = text(j, "", "command", command);
  if (!command.empty()) c.command = command;
  if (std::find(subcommands().begin(), subcommands().end(), c.command) == subcommands().end())
    throw ConfigError("field 'command': unknown subcommand '" + c.command + "'");

  if (!j.contains("model")) throw ConfigError("field 'model': required");
  const auto& model = require_object(j.at("model"), "model");
  reject_unknown(model, "model", {"kernel", "rate"});
  if (!model.contains("kernel")) throw ConfigError("field 'model.kernel': required");
  if (!model.contains("rate")) throw ConfigError("field 'model.rate': required");
  std::tie(c.kernel, c.kernel_json) = parse_kernel(model.at("kernel"), "model.kernel");
  std::tie(c.rate, c.rate_json) = parse_rate(model.at("rate"), "model.rate");

  c.T = positive(j, "", "T", 1.0);
  c.dt = positive(j, "", "dt", 1e-3);
  try {
    (void)TimeGrid::make(c.T, c.dt);
  } catch (const Error& e) {
    throw ConfigError(std::string("field 'dt': ") + e.what());
  }
  c.K = unsigned_int(j, "", "K", 0);
  if (j.contains("N")) {
    const auto& v = j.at("N");
    std::vector<std::uint32_t> ns;
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_unsigned() || v[i].get<std::uint64_t>() == 0 || v[i].get<std::uint64_t>() > UINT32_MAX)
          throw ConfigError("field 'N[" + std::to_string(i) + "]': expected a positive 32-bit integer");
        ns.push_back(v[i].get<std::uint32_t>());
      }
    } else if (v.is_number_unsigned() && v.get<std::uint64_t>() > 0 && v.get<std::uint64_t>() <= UINT32_MAX) {
      ns.push_back(v.get<std::uint32_t>());
    } else {
      throw ConfigError("field 'N': expected a positive integer or a list of them");
    }
    if (ns.empty()) throw ConfigError("field 'N': list must be nonempty");
    c.N = ns;
  }
  c.replicas = unsigned_int(j, "", "replicas", c.replicas);
  if (c.replicas < 2) throw ConfigError("field 'replicas': need at least 2");
  c.gamma = number(j, "", "gamma", c.gamma);
  if (!(c.gamma > 0.0 && c.gamma < 0.5)) throw ConfigError("field 'gamma': must lie in (0, 1/2)");
  c.seed = unsigned_int(j, "", "seed", c.seed);
  if (const char* env = std::getenv("HAWKES_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long s = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw ConfigError("HAWKES_SEED: expected a non-negative integer");
    c.seed = s;
  }
  c.workers = static_cast<unsigned>(unsigned_int(j, "", "workers", 0));
  c.output = text(j, "", "output", c.output);
  if (j.contains("theta")) {
    c.theta = number_list(j, "", "theta");
    for (std::size_t i = 0; i < c.theta.size(); ++i)
      if (!(c.theta[i] >= 0.0)) throw ConfigError("field 'theta[" + std::to_string(i) + "]': must be >= 0");
    if (c.theta.empty()) throw ConfigError("field 'theta': list must be nonempty");
  }
  if (j.contains("psi")) {
    const auto& v = j.at("psi");
    c.psi.clear();
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) c.psi.push_back(check_psi(v[i], "psi[" + std::to_string(i) + "]"));
    } else {
      c.psi.push_back(check_psi(v, "psi"));
    }
    if (c.psi.empty()) throw ConfigError("field 'psi': list must be nonempty");
  }
  c.state = unsigned_int(j, "", "state", 0);
  c.variance_steps = unsigned_int(j, "", "variance_steps", c.variance_steps);
  if (c.variance_steps == 0 || c.variance_steps > kDenseVarianceCap)
    throw ConfigError("field 'variance_steps': must lie in [1, " + std::to_string(kDenseVarianceCap) + "]");

  if (j.contains("eta")) {
    const auto& e = require_object(j.at("eta"), "eta");
    reject_unknown(e, "eta", {"type", "slope", "values", "psi", "ac"});
    c.eta.type = text(e, "eta", "type", "linear");
    if (c.eta.type == "linear") {
      c.eta.slope = number(e, "eta", "slope", 1.0);
    } else if (c.eta.type == "values") {
      c.eta.values = number_list(e, "eta", "values");
    } else if (c.eta.type == "mu_psi") {
      c.eta.psi = e.contains("psi") ? check_psi(e.at("psi"), "eta.psi") : "ell";
    } else {
      throw ConfigError("field 'eta.type': expected one of linear, values, mu_psi");
    }
    if (e.contains("ac")) {
      if (!e.at("ac").is_boolean()) throw ConfigError("field 'eta.ac': expected a boolean");
      c.eta.ac = e.at("ac").get<bool>();
    }
  }
  if (j.contains("thresholds")) {
    const auto& t = require_object(j.at("thresholds"), "thresholds");
    reject_unknown(t, "thresholds", {"variance_band", "slope_min", "slope_max", "ci_z", "duality_tol", "rate_rel",
                                     "homogeneity_tol", "lyapunov_rel", "se_multiple"});
    auto& th = c.thresholds;
    th.variance_band = positive(t, "thresholds", "variance_band", th.variance_band);
    th.slope_min = number(t, "thresholds", "slope_min", th.slope_min);
    th.slope_max = number(t, "thresholds", "slope_max", th.slope_max);
    if (!(th.slope_min < th.slope_max)) throw ConfigError("field 'thresholds.slope_min': must be below slope_max");
    th.ci_z = number(t, "thresholds", "ci_z", th.ci_z);
    th.duality_tol = positive(t, "thresholds", "duality_tol", th.duality_tol);
    th.rate_rel = positive(t, "thresholds", "rate_rel", th.rate_rel);
    th.homogeneity_tol = positive(t, "thresholds", "homogeneity_tol", th.homogeneity_tol);
    th.lyapunov_rel = positive(t, "thresholds", "lyapunov_rel", th.lyapunov_rel);
    th.se_multiple = positive(t, "thresholds", "se_multiple", th.se_multiple);
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::string& command = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), command);
}

// Normalized echo of everything that influences results. Output directory and
// worker count are left out: neither changes a single artifact byte.
inline Json config_echo(const ExperimentConfig& c) {
  const auto& th = c.thresholds;
  Json eta{{"type", c.eta.type}, {"ac", c.eta.ac}};
  if (c.eta.type == "linear") eta["slope"] = c.eta.slope;
  if (c.eta.type == "values") eta["values"] = c.eta.values;
  if (c.eta.type == "mu_psi") eta["psi"] = c.eta.psi;
  return Json{{"command", c.command},
              {"model", {{"kernel", c.kernel_json}, {"rate", c.rate_json}}},
              {"T", c.T},
              {"dt", c.dt},
              {"K", c.K},
              {"N", c.N},
              {"replicas", c.replicas},
              {"gamma", c.gamma},
              {"seed", c.seed},
              {"theta", c.theta},
              {"psi", c.psi},
              {"state", c.state},
              {"variance_steps", c.variance_steps},
              {"eta", eta},
              {"thresholds",
               {{"variance_band", th.variance_band},
                {"slope_min", th.slope_min},
                {"slope_max", th.slope_max},
                {"ci_z", th.ci_z},
                {"duality_tol", th.duality_tol},
                {"rate_rel", th.rate_rel},
                {"homogeneity_tol", th.homogeneity_tol},
                {"lyapunov_rel", th.lyapunov_rel},
                {"se_multiple", th.se_multiple}}}};
}

struct Artifact {
  std::string name;
  std::string content;
};

struct ResultBundle {
  Json summary;
  std::vector<Artifact> artifacts;
  std::vector<std::string> warnings;
  bool passed = true;
  double runtime_seconds = 0.0;
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::string header) { out_ = std::move(header) + "\n"; }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ += (first ? "" : ","), out_ += cell(cells), first = false), ...);
    out_ += "\n";
  }
  std::string str() && { return std::move(out_); }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }
  std::string out_;
};

namespace detail {

// Per-purpose replica seed: the same replica index always sees the same stream,
// whatever the worker count.
inline std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t replica) {
  return derive_seed(derive_seed(seed, purpose), replica);
}

class Checks {
 public:
  void add(const std::string& name, bool passed, Json detail) {
    Json c{{"name", name}, {"passed", passed}};
    for (auto& [k, v] : detail.items()) c[k] = v;
    list_.push_back(std::move(c));
    all_ &= passed;
  }
  bool passed() const noexcept { return all_; }
  const Json& json() const noexcept { return list_; }

 private:
  Json list_ = Json::array();
  bool all_ = true;
};

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline Json assumption_json(const AssumptionReport& r) {
  return Json{{"l1_norm", r.l1_norm},
              {"sup_norm", r.sup_norm},
              {"stability_margin", r.stability_margin},
              {"passed", r.passed},
              {"warnings", r.warnings}};
}

inline void require_assumptions(const AssumptionReport& r, const std::string& command) {
  if (r.passed) return;
  std::string msg = command + " needs a model satisfying the standing assumptions (stability margin " +
                    std::to_string(r.stability_margin) + ")";
  for (const auto& w : r.warnings) msg += "; " + w;
  throw ValidationError(msg);
}

inline std::size_t truncation(const ExperimentConfig& c, const MeanPath& mean) {
  return c.K > 0 ? c.K : default_truncation(mean.m.back());
}

// The field SDE pushes noise of size sqrt(L(K)) through the boundary, far more
// than the tail mass L(K) itself, so it gets extra headroom.
inline std::size_t field_truncation(const ExperimentConfig& c, const MeanPath& mean) {
  return c.K > 0 ? c.K : default_truncation(mean.m.back()) + 10;
}

inline TestFunction make_psi(const std::string& name, const TimeGrid& grid, std::size_t K) {
  if (name == "ell") return ell_function(grid, K);
  if (name == "ge1") return indicator_at_least(grid, K, 1);
  if (name == "ge2") return indicator_at_least(grid, K, 2);
  if (name == "t_ell") return time_ell_function(grid, K);
  throw ConfigError("unknown test function '" + name + "'");
}

// sup_t |A_t - B_t| for two counting processes given by sorted jump times.
inline double sup_count_difference(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t i = 0, j = 0;
  long d = 0, best = 0;
  while (i < a.size() || j < b.size()) {
    const double t = std::min(i < a.size() ? a[i] : INFINITY, j < b.size() ? b[j] : INFINITY);
    while (i < a.size() && a[i] == t) ++i, ++d;
    while (j < b.size() && b[j] == t) ++j, --d;
    best = std::max(best, std::abs(d));
  }
  return static_cast<double>(best);
}

// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

inline Json moments_json(const Moments& m) {
  return Json{{"count", m.count},
              {"mean", m.mean},
              {"variance", m.variance},
              {"mean_ci95", m.mean_ci},
              {"variance_ci95", m.variance_ci}};
}

struct Context {
  const ExperimentConfig& cfg;
  AssumptionReport report;
  Checks checks;
  Json estimates = Json::object();
  std::vector<Artifact> artifacts;
  std::vector<std::string> warnings;
};

inline void run_meanfield(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  Csv csv("t,m,lambda");
  for (std::size_t k = 0; k <= mean.grid.n; ++k) csv.row(mean.grid.time(k), mean.m[k], mean.lambda[k]);
  ctx.artifacts.push_back({"meanfield.csv", std::move(csv).str()});
  ctx.estimates["m_T"] = mean.m.back();
  ctx.estimates["lambda_T"] = mean.lambda.back();
  ctx.estimates["lambda_max"] = mean.lambda_max();
  ctx.checks.add("solution_finite", std::isfinite(mean.m.back()), Json{{"m_T", mean.m.back()}});
}

inline void run_simulate(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const std::uint32_t N = c.N.front();
  const auto log = simulate_hawkes(N, c.kernel, c.rate, c.T, c.seed);
  std::ostringstream bin(std::ios::binary);
  write_binary(bin, log);
  ctx.artifacts.push_back({"events.bin", bin.str()});
  std::ostringstream csv_events;
  write_csv(csv_events, log);
  ctx.artifacts.push_back({"events.csv", csv_events.str()});
  const auto zbar = mean_path(log, mean.grid);
  Csv csv("t,zbar,m");
  for (std::size_t k = 0; k <= mean.grid.n; ++k) csv.row(mean.grid.time(k), zbar[k], mean.m[k]);
  ctx.artifacts.push_back({"mean_path.csv", std::move(csv).str()});
  double sup = 0.0;
  for (std::size_t k = 0; k <= mean.grid.n; ++k) sup = std::max(sup, std::abs(zbar[k] - mean.m[k]));
  ctx.estimates["N"] = N;
  ctx.estimates["total_jumps"] = log.total_jumps();
  ctx.estimates["zbar_T"] = zbar.back();
  ctx.estimates["m_T"] = mean.m.back();
  ctx.estimates["sup_abs_zbar_minus_m"] = sup;
}

inline void run_clt(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const std::uint32_t N = c.N.front();
  const double mT = mean.m.back();
  const double root = std::sqrt(static_cast<double>(N));
  const auto samples = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
    const auto log = simulate_hawkes(N, c.kernel, c.rate, c.T, replica_seed(c.seed, 0, r));
    return root * (static_cast<double>(log.total_jumps()) / N - mT);
  });
  const auto mom = estimate_moments(samples);

  const std::size_t steps = std::min(mean.grid.n, c.variance_steps);
  const auto coarse = solve_mean(c.kernel, c.rate, c.T, c.T / static_cast<double>(steps));
  const auto var_path = limit_mean_variance(coarse, c.kernel, c.rate);
  const double reference = var_path.back();
  Csv rep("replica,scaled_deviation");
  for (std::size_t r = 0; r < samples.size(); ++r) rep.row(r, samples[r]);
  ctx.artifacts.push_back({"replicas.csv", std::move(rep).str()});
  Csv var("t,variance");
  for (std::size_t k = 0; k <= coarse.grid.n; ++k) var.row(coarse.grid.time(k), var_path[k]);
  ctx.artifacts.push_back({"variance.csv", std::move(var).str()});

  const double ratio = mom.variance / reference;
  ctx.estimates["N"] = N;
  ctx.estimates["sample"] = moments_json(mom);
  ctx.estimates["limit_variance"] = reference;
  ctx.estimates["variance_ratio"] = ratio;
  ctx.checks.add("variance_ratio", std::abs(ratio - 1.0) <= c.thresholds.variance_band,
                 Json{{"value", ratio}, {"lower", 1.0 - c.thresholds.variance_band},
                      {"upper", 1.0 + c.thresholds.variance_band}});
  if (c.kernel.as_exponential() && coarse.grid.n <= kDenseVarianceCap) {
    const double dense = dense_mean_variance(coarse, c.kernel, c.rate).back();
    const double lyap = lyapunov_mean_variance(coarse, c.kernel, c.rate).back();
    const double rel = rel_diff(dense, lyap);
    ctx.estimates["dense_variance"] = dense;
    ctx.estimates["lyapunov_variance"] = lyap;
    ctx.checks.add("dense_vs_lyapunov", rel <= c.thresholds.lyapunov_rel,
                   Json{{"value", rel}, {"tolerance", c.thresholds.lyapunov_rel}});
  }
}

inline void run_field_clt(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const std::size_t K = field_truncation(c, mean);
  if (c.state > K) throw ConfigError("field 'state': beyond the truncation K=" + std::to_string(K));
  const std::uint32_t N = c.N.front();
  const double root = std::sqrt(static_cast<double>(N));
  const double p = limit_law(mean, c.T, K).pmf[c.state];
  const auto particle = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
    const auto log = simulate_hawkes(N, c.kernel, c.rate, c.T, replica_seed(c.seed, 0, r));
    std::size_t hits = 0;
    for (const auto& j : log.jumps) hits += j.size() == c.state;
    return root * (static_cast<double>(hits) / N - p);
  });
  const auto spde = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
    const auto field = simulate_limit_field(mean, c.kernel, c.rate, K, replica_seed(c.seed, 1, r));
    return field.values(mean.grid.n, c.state);
  });
  const auto mp = estimate_moments(particle);
  const auto ms = estimate_moments(spde);
  Csv csv("replica,particle,spde");
  for (std::size_t r = 0; r < particle.size(); ++r) csv.row(r, particle[r], spde[r]);
  ctx.artifacts.push_back({"field_replicas.csv", std::move(csv).str()});

  const double band = c.thresholds.variance_band;
  ctx.estimates["N"] = N;
  ctx.estimates["K"] = K;
  ctx.estimates["state"] = c.state;
  ctx.estimates["limit_law_at_state"] = p;
  ctx.estimates["particle"] = moments_json(mp);
  ctx.estimates["spde"] = moments_json(ms);
  if (c.kernel.is_zero()) {
    // Independent Poisson counts: the indicator variance is p(1 - p).
    const double exact = p * (1.0 - p);
    ctx.estimates["exact_variance"] = exact;
    ctx.checks.add("particle_variance", rel_diff(mp.variance, exact) <= band,
                   Json{{"value", mp.variance}, {"reference", exact}, {"band", band}});
    ctx.checks.add("spde_variance", rel_diff(ms.variance, exact) <= band,
                   Json{{"value", ms.variance}, {"reference", exact}, {"band", band}});
  } else {
    ctx.checks.add("particle_vs_spde_variance", rel_diff(mp.variance, ms.variance) <= band,
                   Json{{"value", mp.variance}, {"reference", ms.variance}, {"band", band}});
  }
}

inline void run_couple_scaling(Context& ctx) {
  const auto& c = ctx.cfg;
  if (c.N.size() < 3) throw ConfigError("field 'N': couple-scaling needs >= 3 points");
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  Csv csv("N,mean_sup_diff,se_sup_diff,mean_max_diff");
  std::vector<double> logn, logd, logmax;
  bool degenerate = true;
  Json rows = Json::array();
  for (std::size_t idx = 0; idx < c.N.size(); ++idx) {
    const std::uint32_t N = c.N[idx];
    struct Rep {
      double mean_sup = 0.0, max_sup = 0.0;
    };
    const auto reps = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
      const auto cl = simulate_coupled(N, c.kernel, c.rate, mean, c.T, replica_seed(c.seed, idx, r));
      Rep out;
      for (std::uint32_t i = 0; i < N; ++i) {
        const double d = sup_count_difference(cl.hawkes.jumps[i], cl.poisson.jumps[i]);
        out.mean_sup += d;
        out.max_sup = std::max(out.max_sup, d);
      }
      out.mean_sup /= N;
      return out;
    });
    std::vector<double> per(reps.size()), mx(reps.size());
    for (std::size_t r = 0; r < reps.size(); ++r) per[r] = reps[r].mean_sup, mx[r] = reps[r].max_sup;
    const auto m = estimate_moments(per);
    const double mmax = std::accumulate(mx.begin(), mx.end(), 0.0) / static_cast<double>(mx.size());
    csv.row(N, m.mean, std::sqrt(m.variance / static_cast<double>(m.count)), mmax);
    rows.push_back(Json{{"N", N}, {"mean_sup_diff", m.mean}, {"mean_max_diff", mmax}});
    degenerate &= m.mean == 0.0 && mmax == 0.0;
    logn.push_back(std::log(static_cast<double>(N)));
    logd.push_back(std::log(m.mean));
    logmax.push_back(std::log(mmax));
  }
  ctx.artifacts.push_back({"coupling.csv", std::move(csv).str()});
  ctx.estimates["table"] = rows;
  if (degenerate) {
    ctx.estimates["degenerate"] = true;
    ctx.checks.add("slope", true, Json{{"degenerate", true}, {"note", "coupled paths coincide for every N"}});
    return;
  }
  const bool finite = std::all_of(logd.begin(), logd.end(), [](double v) { return std::isfinite(v); });
  if (!finite) {
    ctx.checks.add("slope", false, Json{{"note", "some N has zero mean difference; slope undefined"}});
    return;
  }
  const double slope = ls_slope(logn, logd);
  ctx.estimates["slope"] = slope;
  if (std::all_of(logmax.begin(), logmax.end(), [](double v) { return std::isfinite(v); }))
    ctx.estimates["slope_of_max"] = ls_slope(logn, logmax);
  ctx.checks.add("slope", slope >= c.thresholds.slope_min && slope <= c.thresholds.slope_max,
                 Json{{"value", slope}, {"lower", c.thresholds.slope_min}, {"upper", c.thresholds.slope_max}});
}

inline void run_exp_moment(Context& ctx) {
  const auto& c = ctx.cfg;
  if (!(ctx.report.stability_margin > 0.0)) throw ValidationError("exp-moment bound needs a positive stability margin");
  const std::uint32_t N = c.N.front();
  const double phi0 = c.rate(0.0);
  const auto totals = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
    return static_cast<double>(simulate_hawkes(N, c.kernel, c.rate, c.T, replica_seed(c.seed, 0, r)).total_jumps());
  });
  const double R = static_cast<double>(totals.size());
  const double max_total = *std::max_element(totals.begin(), totals.end());
  Csv csv("theta_times_N,theta_used_times_N,log_estimate,log_bound,log_slack,log_poisson_exact");
  Json rows = Json::array();
  bool ok = true;
  for (double scaled : c.theta) {
    // theta * N * Zbar = (scaled / N) * total jumps.
    double used = scaled;
    while (used / N * max_total > 700.0) {
      used *= 0.5;
      ctx.warnings.push_back("exp-moment: theta*N reduced to " + fmt(used) + " to avoid overflow");
    }
    const double theta = used / N;
    std::vector<double> x(totals.size());
    for (std::size_t r = 0; r < totals.size(); ++r) x[r] = theta * totals[r];
    const double xm = *std::max_element(x.begin(), x.end());
    double s = 0.0, s2 = 0.0;
    for (double v : x) {
      const double e = std::exp(v - xm);
      s += e;
      s2 += e * e;
    }
    const double mean_e = s / R;
    const double var_e = std::max(0.0, (s2 / R - mean_e * mean_e) * R / (R - 1.0));
    const double log_est = xm + std::log(mean_e);
    const double rel_se = std::sqrt(var_e / R) / mean_e;
    const double log_slack = std::log1p(c.thresholds.ci_z * rel_se);
    const double log_bound = 2.0 * N * theta * phi0 * c.T / ctx.report.stability_margin;
    const bool pass = log_est <= log_bound + log_slack;
    ok &= pass;
    Json row{{"theta_times_N", scaled}, {"theta_used_times_N", used}, {"log_estimate", log_est},
             {"log_bound", log_bound}, {"log_slack", log_slack}, {"passed", pass}};
    double exact = std::numeric_limits<double>::quiet_NaN();
    if (c.kernel.is_zero()) {
      exact = N * phi0 * c.T * std::expm1(theta);
      row["log_poisson_exact"] = exact;
    }
    csv.row(scaled, used, log_est, log_bound, log_slack, exact);
    rows.push_back(row);
  }
  ctx.artifacts.push_back({"exp_moment.csv", std::move(csv).str()});
  ctx.estimates["N"] = N;
  ctx.estimates["table"] = rows;
  ctx.checks.add("bound_holds", ok, Json{{"thetas", c.theta.size()}});
}

inline MeanDeviationPath build_eta(const ExperimentConfig& c, const MeanPath& mean, const DeviationModel* model) {
  const auto& grid = mean.grid;
  if (c.eta.type == "linear") {
    auto p = MeanDeviationPath::from_derivative(grid, std::vector<double>(grid.points(), c.eta.slope));
    p.ac = c.eta.ac;
    return p;
  }
  if (c.eta.type == "values") {
    if (c.eta.values.size() != grid.points())
      throw ConfigError("field 'eta.values': expected " + std::to_string(grid.points()) + " grid values");
    return MeanDeviationPath::from_values(grid, c.eta.values, c.eta.ac);
  }
  const auto mu = solve_linearized(make_psi(c.eta.psi, grid, model->K()), *model);
  std::vector<double> eta(grid.points());
  for (std::size_t k = 0; k <= grid.n; ++k) eta[k] = mu.pair_ell(k);
  return MeanDeviationPath::from_values(grid, std::move(eta), c.eta.ac);
}

inline void run_mdp_rate(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  std::optional<DeviationModel> model;
  if (c.eta.type == "mu_psi") model.emplace(mean, c.kernel, c.rate, truncation(c, mean));
  const auto eta = build_eta(c, mean, model ? &*model : nullptr);
  const double J = rate_mean(eta, mean, c.kernel, c.rate);
  ctx.estimates["rate_mean"] = J;
  ctx.estimates["absolutely_continuous"] = eta.ac;
  if (!eta.ac) {
    ctx.checks.add("non_ac_is_infinite", std::isinf(J), Json{{"value", "inf"}});
    return;
  }
  Csv csv("t,eta,eta_deriv");
  for (std::size_t k = 0; k <= mean.grid.n; ++k) csv.row(mean.grid.time(k), eta.eta[k], eta.eta_deriv[k]);
  ctx.artifacts.push_back({"eta.csv", std::move(csv).str()});
  ctx.checks.add("nonnegative", J >= 0.0, Json{{"value", J}});
  Json hom = Json::array();
  double worst = 0.0;
  for (double s : {0.5, 2.0, 10.0}) {
    auto scaled = eta;
    for (auto& v : scaled.eta) v *= s;
    for (auto& v : scaled.eta_deriv) v *= s;
    const double Js = rate_mean(scaled, mean, c.kernel, c.rate);
    const double rel = J == 0.0 ? std::abs(Js) : rel_diff(Js, s * s * J);
    worst = std::max(worst, rel);
    hom.push_back(Json{{"c", s}, {"rate", Js}, {"relative_error", rel}});
  }
  ctx.estimates["homogeneity"] = hom;
  ctx.checks.add("quadratic_homogeneity", worst <= c.thresholds.homogeneity_tol,
                 Json{{"value", worst}, {"tolerance", c.thresholds.homogeneity_tol}});
  auto broken = eta;
  broken.ac = false;
  ctx.checks.add("non_ac_is_infinite", std::isinf(rate_mean(broken, mean, c.kernel, c.rate)), Json::object());
  const auto* affine = c.rate.as_affine();
  if (c.kernel.is_zero() && affine && affine->slope == 0.0 && c.eta.type == "linear") {
    // Constant intensity: J = slope^2 T / (2 phi).
    const double closed = c.eta.slope * c.eta.slope * c.T / (2.0 * affine->base);
    ctx.estimates["closed_form"] = closed;
    ctx.checks.add("closed_form", std::abs(J - closed) <= 1e-6, Json{{"value", J}, {"reference", closed}});
  }
}

inline void run_mdp_field(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const DeviationModel model(mean, c.kernel, c.rate, truncation(c, mean));
  auto basis = default_basis(mean.grid, model.K());
  Csv coeffs("psi,basis,coefficient");
  Json rows = Json::array();
  for (const auto& name : c.psi) {
    const auto psi = make_psi(name, mean.grid, model.K());
    if (std::none_of(basis.begin(), basis.end(), [&](const TestFunction& b) { return b.values().data() == psi.values().data(); }))
      basis.push_back(psi);
    const auto mu = solve_linearized(psi, model);
    const auto rf = rate_field(mu, std::span<const TestFunction>(basis), model);
    const double half = 0.5 * inner(psi, psi, model);
    const double rel = rel_diff(rf.rate, half);
    Json row{{"psi", name}, {"rate_field", rf.rate}, {"half_inner", half}, {"condition", rf.condition}};
    ctx.checks.add("riesz_" + name, rel <= c.thresholds.rate_rel,
                   Json{{"value", rf.rate}, {"reference", half}, {"relative_error", rel}});
    if (name == "ell") {
      std::vector<double> eta(mean.grid.points());
      for (std::size_t k = 0; k <= mean.grid.n; ++k) eta[k] = mu.pair_ell(k);
      const double Jm = rate_mean(MeanDeviationPath::from_values(mean.grid, std::move(eta)), mean, c.kernel, c.rate);
      const double crel = rel_diff(Jm, rf.rate);
      row["rate_mean_of_projection"] = Jm;
      ctx.checks.add("contraction_ell", crel <= c.thresholds.rate_rel,
                     Json{{"value", Jm}, {"reference", rf.rate}, {"relative_error", crel}});
      Csv field("t,x,mu");
      for (std::size_t k = 0; k <= mean.grid.n; ++k)
        for (std::size_t x = 0; x <= model.K(); ++x) field.row(mean.grid.time(k), x, mu.values(k, x));
      ctx.artifacts.push_back({"field_ell.csv", std::move(field).str()});
    }
    for (std::size_t i = 0; i < basis.size(); ++i) coeffs.row(name, basis[i].name(), rf.coefficients[i]);
    rows.push_back(row);
  }
  ctx.artifacts.push_back({"coefficients.csv", std::move(coeffs).str()});
  ctx.estimates["K"] = model.K();
  ctx.estimates["table"] = rows;
}

inline void run_mdp_duality(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const DeviationModel model(mean, c.kernel, c.rate, truncation(c, mean));
  const auto probes = probe_basis(mean.grid, model.K());
  Csv csv("psi,probe,upsilon,inner,scaled_error");
  double worst = 0.0;
  for (const auto& name : c.psi) {
    const auto psi = make_psi(name, mean.grid, model.K());
    const auto mu = solve_linearized(psi, model);
    for (const auto& phi : probes) {
      const double u = upsilon(mu, phi, model);
      const double ip = inner(psi, phi, model);
      const double err = std::abs(u - ip) / (1.0 + std::abs(ip));
      worst = std::max(worst, err);
      csv.row(name, phi.name(), u, ip, err);
    }
  }
  ctx.artifacts.push_back({"duality.csv", std::move(csv).str()});
  ctx.estimates["K"] = model.K();
  ctx.estimates["max_scaled_error"] = worst;
  ctx.checks.add("duality", worst <= c.thresholds.duality_tol,
                 Json{{"value", worst}, {"tolerance", c.thresholds.duality_tol}});
}

inline void run_mdp_perturbed(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto mean = solve_mean(c.kernel, c.rate, c.T, c.dt);
  const DeviationModel model(mean, c.kernel, c.rate, truncation(c, mean));
  const std::uint32_t N = c.N.front();
  const SpeedSequence speed(c.gamma);
  const auto psi = make_psi(c.psi.front(), mean.grid, model.K());
  const auto mu = solve_linearized(psi, model);
  const double target = mu.pair_ell(mean.grid.n);
  const Tilt tilt = tilt_from(psi);
  const double scale = speed.tilt_scale(N);
  const auto samples = run_replicas(c.replicas, c.workers, [&](std::size_t r) {
    const auto log = simulate_perturbed(N, c.kernel, c.rate, tilt, scale, c.T, replica_seed(c.seed, 0, r));
    return rescaled_field(log, mean, model.K(), speed).pair_ell(mean.grid.n);
  });
  const auto m = estimate_moments(samples);
  const double se = std::sqrt(m.variance / static_cast<double>(m.count));
  Csv csv("replica,rescaled_ell");
  for (std::size_t r = 0; r < samples.size(); ++r) csv.row(r, samples[r]);
  ctx.artifacts.push_back({"perturbed.csv", std::move(csv).str()});
  ctx.estimates["N"] = N;
  ctx.estimates["tilt_scale"] = scale;
  ctx.estimates["sample"] = moments_json(m);
  ctx.estimates["standard_error"] = se;
  ctx.estimates["linearized_target"] = target;
  ctx.checks.add("within_standard_errors", std::abs(m.mean - target) <= c.thresholds.se_multiple * se,
                 Json{{"value", m.mean}, {"reference", target}, {"standard_error", se},
                      {"multiple", c.thresholds.se_multiple}});
}

}  // namespace detail

inline bool needs_assumptions(const std::string& command) {
  return command != "meanfield" && command != "simulate";
}

// Runs one subcommand. Deterministic given (config, seed); the worker count
// only affects wall time.
inline ResultBundle run(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  detail::Context ctx{cfg, validate_assumptions(cfg.kernel, cfg.rate, cfg.T), {}, Json::object(), {}, {}};
  if (needs_assumptions(cfg.command)) detail::require_assumptions(ctx.report, cfg.command);
  const std::string& cmd = cfg.command;
  if (cmd == "meanfield") detail::run_meanfield(ctx);
  else if (cmd == "simulate") detail::run_simulate(ctx);
  else if (cmd == "clt-check") detail::run_clt(ctx);
  else if (cmd == "field-clt-check") detail::run_field_clt(ctx);
  else if (cmd == "couple-scaling") detail::run_couple_scaling(ctx);
  else if (cmd == "exp-moment") detail::run_exp_moment(ctx);
  else if (cmd == "mdp-rate") detail::run_mdp_rate(ctx);
  else if (cmd == "mdp-field") detail::run_mdp_field(ctx);
  else if (cmd == "mdp-duality") detail::run_mdp_duality(ctx);
  else if (cmd == "mdp-perturbed") detail::run_mdp_perturbed(ctx);
  else throw ConfigError("unknown subcommand '" + cmd + "'");

  ResultBundle out;
  out.passed = ctx.checks.passed();
  out.warnings = ctx.warnings;
  Json names = Json::array();
  for (const auto& a : ctx.artifacts) names.push_back(a.name);
  out.summary = Json{{"command", cmd},
                     {"version", kVersion},
                     {"seed", cfg.seed},
                     {"passed", out.passed},
                     {"checks", ctx.checks.json()},
                     {"estimates", ctx.estimates},
                     {"assumptions", detail::assumption_json(ctx.report)},
                     {"warnings", ctx.warnings},
                     {"artifacts", names},
                     {"config", config_echo(cfg)}};
  out.artifacts = std::move(ctx.artifacts);
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Writes summary.json and the CSV/binary artifacts; wall time goes to
// timing.json so that everything else is byte-reproducible.
inline void write_bundle(const ResultBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / name).string());
    os << content;
  };
  put("summary.json", b.summary.dump(2) + "\n");
  for (const auto& a : b.artifacts) put(a.name, a.content);
  put("timing.json", Json{{"runtime_seconds", b.runtime_seconds}}.dump(2) + "\n");
}

}  // namespace hawkes
