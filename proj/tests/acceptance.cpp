// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance        run all criteria
//   acceptance 3 7    run the listed criteria
// Exit status is 0 only if every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "hawkes/experiment.hpp"

using namespace hawkes;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

const std::string kExpKernel = R"({"type": "exponential", "a": 1.0, "b": 2.0})";
const std::string kAffine = R"({"type": "affine", "base": 1.0, "slope": 1.0})";
const std::string kZero = R"({"type": "zero"})";
const std::string kTwo = R"({"type": "constant", "value": 2.0})";

ExperimentConfig make(const std::string& command, const std::string& kernel, const std::string& rate,
                      const std::string& extra) {
  return parse_config(R"({"model": {"kernel": )" + kernel + R"(, "rate": )" + rate + "}, " + extra + "}", command);
}

const Json* find_check(const ResultBundle& b, const std::string& name) {
  for (const auto& c : b.summary["checks"])
    if (c["name"] == name) return &c;
  return nullptr;
}

bool check_passed(const ResultBundle& b, const std::string& name) {
  const Json* c = find_check(b, name);
  return c != nullptr && (*c)["passed"].get<bool>();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Mean-field solver against lambda(t) = 2 - e^{-t}, m(t) = 2t - (1 - e^{-t}).
Outcome criterion_mean_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto mean = solve_mean(Kernel::exponential(1, 2), RateFn::affine(1, 1), 1.0, 1e-3);
  const double secs = seconds_since(t0);
  double err = 0.0;
  for (std::size_t k = 0; k <= mean.grid.n; ++k) {
    const double t = mean.grid.time(k);
    err = std::max({err, std::abs(mean.lambda[k] - (2.0 - std::exp(-t))),
                    std::abs(mean.m[k] - (2.0 * t - 1.0 + std::exp(-t)))});
  }
  return {err <= 1e-3 && secs < 1.0, "max grid error " + num(err) + " (<= 1e-3), solve " + num(secs, 3) + " s (< 1 s)"};
}

// 2. Law of large numbers over 20 independent meta-runs.
Outcome criterion_lln() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto zbars = run_replicas(20, 0, [](std::size_t r) {
    const auto log = simulate_hawkes(5000, Kernel::exponential(1, 2), RateFn::affine(1, 1), 1.0, derive_seed(2002, r));
    return static_cast<double>(log.total_jumps()) / 5000.0;
  });
  const double secs = seconds_since(t0);
  int hits = 0;
  double worst = 0.0;
  for (double z : zbars) {
    hits += std::abs(z - 1.367879) <= 0.05;
    worst = std::max(worst, std::abs(z - 1.367879));
  }
  return {hits >= 19 && secs < 60.0, std::to_string(hits) + "/20 runs within 0.05 of 1.367879 (worst " + num(worst) +
                                        "), " + num(secs, 3) + " s"};
}

// 3. Scalar CLT: sample variance vs limit_mean_variance, plus dense/Lyapunov agreement.
Outcome criterion_scalar_clt() {
  const auto t0 = std::chrono::steady_clock::now();
  auto b = run(make("clt-check", kExpKernel, kAffine,
                    R"("N": 2000, "replicas": 500, "dt": 0.001, "variance_steps": 500, "seed": 3003)"));
  const double secs = seconds_since(t0);
  const auto& e = b.summary["estimates"];
  const bool ok = check_passed(b, "variance_ratio") && check_passed(b, "dense_vs_lyapunov") && secs < 300.0;
  return {ok, "sample var " + num(e["sample"]["variance"].get<double>()) + " vs limit " +
                  num(e["limit_variance"].get<double>()) + " (ratio " + num(e["variance_ratio"].get<double>()) +
                  ", band 10%); dense " + num(e["dense_variance"].get<double>(), 8) + " vs Lyapunov " +
                  num(e["lyapunov_variance"].get<double>(), 8) + "; " + num(secs, 3) + " s"};
}

// 4. Field CLT at the point mass 1_{0}: particles and the limit SPDE against e^-2 (1 - e^-2).
Outcome criterion_field_clt() {
  const auto t0 = std::chrono::steady_clock::now();
  auto b = run(make("field-clt-check", kZero, kTwo, R"("N": 2000, "replicas": 2000, "K": 30, "state": 0, "seed": 4004)"));
  const double secs = seconds_since(t0);
  const auto& e = b.summary["estimates"];
  const double exact = std::exp(-2.0) * (1.0 - std::exp(-2.0));
  const bool ok = check_passed(b, "particle_variance") && check_passed(b, "spde_variance") &&
                  std::abs(e["exact_variance"].get<double>() - 0.117019) < 1e-6 && secs < 300.0;
  return {ok, "particle var " + num(e["particle"]["variance"].get<double>()) + ", SPDE var " +
                  num(e["spde"]["variance"].get<double>()) + " vs " + num(exact) + " (band 10%); " + num(secs, 3) + " s"};
}

// 5. Coupling distance scaling, and the exact-zero degenerate case.
Outcome criterion_coupling() {
  auto b = run(make("couple-scaling", kExpKernel, kAffine, R"("N": [250, 1000, 4000], "replicas": 200, "seed": 5005)"));
  auto z = run(make("couple-scaling", kZero, kTwo, R"("N": [250, 1000, 4000], "replicas": 20, "seed": 5005)"));
  const double slope = b.summary["estimates"]["slope"].get<double>();
  const bool degenerate = z.passed && z.summary["estimates"].contains("degenerate");
  std::string table;
  for (const auto& row : b.summary["estimates"]["table"])
    table += " N=" + std::to_string(row["N"].get<int>()) + ":" + num(row["mean_sup_diff"].get<double>(), 4);
  return {check_passed(b, "slope") && degenerate,
          "slope " + num(slope) + " in [-0.65, -0.35];" + table + "; zero kernel degenerate pass " +
              (degenerate ? "yes" : "no")};
}

// 6. Exponential moments below the analytic bound, both test models.
Outcome criterion_exp_moments() {
  std::string detail;
  bool ok = true;
  for (const auto& [kernel, rate, label] : {std::tuple{kZero, kTwo, "poisson"}, std::tuple{kExpKernel, kAffine, "exp-linear"}}) {
    auto b = run(make("exp-moment", kernel, rate, R"("N": 1000, "replicas": 200, "theta": [0.01, 0.05], "seed": 6006)"));
    ok &= b.passed && b.warnings.empty();
    detail += std::string(detail.empty() ? "" : "; ") + label + ":";
    for (const auto& row : b.summary["estimates"]["table"])
      detail += " log E=" + num(row["log_estimate"].get<double>(), 4) + " <= " + num(row["log_bound"].get<double>(), 4);
  }
  return {ok, detail};
}

// 7. Closed-form mean rate, quadratic homogeneity, +inf on non-AC paths.
Outcome criterion_mdp_rate() {
  auto b = run(make("mdp-rate", kZero, kTwo, R"("eta": {"type": "linear", "slope": 1.0})"));
  auto na = run(make("mdp-rate", kZero, kTwo, R"("eta": {"type": "linear", "slope": 1.0, "ac": false})"));
  const double J = b.summary["estimates"]["rate_mean"].get<double>();
  const double hom = (*find_check(b, "quadratic_homogeneity"))["value"].get<double>();
  const bool ok = std::abs(J - 0.25) <= 1e-6 && hom <= 1e-10 && check_passed(b, "non_ac_is_infinite") && na.passed;
  return {ok, "rate " + num(J, 12) + " (0.25 +- 1e-6), homogeneity rel err " + num(hom, 3) + " (<= 1e-10), non-AC +inf " +
                  (na.passed ? "yes" : "no")};
}

// 8. Duality against the probe basis, and Riesz recovery of 1/2 [psi, psi].
Outcome criterion_duality() {
  auto d = run(make("mdp-duality", kExpKernel, kAffine, R"("psi": ["ell", "ge1", "t_ell"])"));
  auto f = run(make("mdp-field", kExpKernel, kAffine, R"("psi": ["ell", "ge1", "t_ell"])"));
  std::string detail = "max scaled duality error " + num(d.summary["estimates"]["max_scaled_error"].get<double>(), 3) + " (<= 1e-6)";
  bool ok = d.passed;
  for (const char* psi : {"ell", "ge1", "t_ell"}) {
    const Json* c = find_check(f, std::string("riesz_") + psi);
    ok &= c && (*c)["passed"].get<bool>();
    if (c) detail += "; " + std::string(psi) + " rel err " + num((*c)["relative_error"].get<double>(), 3);
  }
  return {ok, detail};
}

// 9. Contraction: rate_mean of the l-projection equals rate_field for psi = l.
Outcome criterion_contraction() {
  auto f = run(make("mdp-field", kExpKernel, kAffine, R"("psi": "ell")"));
  const Json* c = find_check(f, "contraction_ell");
  if (!c) return {false, "contraction check missing"};
  return {(*c)["passed"].get<bool>(), "rate_mean " + num((*c)["value"].get<double>(), 8) + " vs rate_field " +
                                          num((*c)["reference"].get<double>(), 8) + " (rel err " +
                                          num((*c)["relative_error"].get<double>(), 3) + ", <= 1%)"};
}

// 10. Tilted system against the linearized limit.
Outcome criterion_perturbed() {
  auto b = run(make("mdp-perturbed", kZero, kTwo, R"("N": 1000, "gamma": 0.25, "replicas": 300, "psi": "ell", "seed": 1010)"));
  const auto& e = b.summary["estimates"];
  const double mean = e["sample"]["mean"].get<double>(), target = e["linearized_target"].get<double>();
  const double se = e["standard_error"].get<double>();
  return {b.passed, "sample mean " + num(mean) + " vs linearized " + num(target) + ", |diff| = " +
                        num(std::abs(mean - target) / se, 3) + " standard errors (se " + num(se, 3) + ", limit 3)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 11. Byte-identical artifacts across reruns and worker counts.
Outcome criterion_determinism() {
  const auto root = std::filesystem::temp_directory_path() / "hawkes_acceptance_determinism";
  std::filesystem::remove_all(root);
  struct Case {
    const char* command;
    std::string kernel, rate, extra;
  };
  const std::vector<Case> cases{
      {"simulate", kExpKernel, kAffine, R"("N": 500, "seed": 11)"},
      {"clt-check", kExpKernel, kAffine, R"("N": 300, "replicas": 40, "dt": 0.01, "seed": 11)"},
      {"couple-scaling", kExpKernel, kAffine, R"("N": [50, 100, 200], "replicas": 12, "dt": 0.01, "seed": 11)"},
      {"field-clt-check", kExpKernel, kAffine, R"("N": 200, "replicas": 16, "dt": 0.01, "seed": 11)"},
      {"mdp-field", kExpKernel, kAffine, R"("dt": 0.01)"}};
  std::size_t files = 0;
  std::string mismatch;
  for (const auto& c : cases) {
    std::vector<std::filesystem::path> dirs;
    for (auto [run_id, workers] : {std::pair{0, 1u}, std::pair{1, 1u}, std::pair{2, 4u}}) {
      auto cfg = make(c.command, c.kernel, c.rate, c.extra);
      cfg.workers = workers;
      const auto dir = root / (std::string(c.command) + "_" + std::to_string(run_id));
      write_bundle(run(cfg), dir);
      dirs.push_back(dir);
    }
    for (const auto& entry : std::filesystem::directory_iterator(dirs[0])) {
      const auto name = entry.path().filename();
      if (name == "timing.json") continue;
      const std::string ref = slurp(entry.path());
      for (std::size_t i = 1; i < dirs.size(); ++i)
        if (slurp(dirs[i] / name) != ref) mismatch += std::string(" ") + c.command + "/" + name.string();
      ++files;
    }
  }
  std::filesystem::remove_all(root);
  return {mismatch.empty() && files > 0,
          std::to_string(files) + " artifacts compared across 2 reruns and workers {1, 4}" +
              (mismatch.empty() ? "; all identical" : "; differing:" + mismatch)};
}

const std::vector<std::pair<const char*, std::function<Outcome()>>> kCriteria{
    {"mean-field solver", criterion_mean_solver},
    {"law of large numbers", criterion_lln},
    {"scalar CLT", criterion_scalar_clt},
    {"field CLT", criterion_field_clt},
    {"coupling scaling", criterion_coupling},
    {"exponential moments", criterion_exp_moments},
    {"MDP rate closed form", criterion_mdp_rate},
    {"MDP duality", criterion_duality},
    {"contraction consistency", criterion_contraction},
    {"perturbed process", criterion_perturbed},
    {"determinism", criterion_determinism}};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(kCriteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s' (1..%zu)\n", argv[i], kCriteria.size());
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(n));
  }
  if (selected.empty())
    for (std::size_t n = 1; n <= kCriteria.size(); ++n) selected.push_back(n);

  bool all = true;
  for (std::size_t n : selected) {
    const auto& [name, fn] = kCriteria[n - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2zu %s  %s: %s [%.2f s]\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    all &= o.pass;
  }
  return all ? 0 : 1;
}
