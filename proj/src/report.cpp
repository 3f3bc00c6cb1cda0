#include "vsem/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "vsem/error.hpp"

namespace vsem {

using nlohmann::ordered_json;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::string utc_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest make_manifest(std::string command, ordered_json config, std::uint64_t seed) {
  RunManifest m;
  m.command = std::move(command);
  m.config_hash = fnv1a_hex(config.dump());
  m.config = std::move(config);
  m.seed = seed;
  m.started = utc_timestamp();
  return m;
}

ordered_json to_json(const RunManifest& m) {
  ordered_json inputs = ordered_json::array();
  for (const auto& [path, digest] : m.inputs) inputs.push_back({{"path", path}, {"fnv1a", digest}});
  return {{"command", m.command},
          {"config_hash", m.config_hash},
          {"config", m.config},
          {"seed", m.seed},
          {"versions", {{"vsem", VSEM_VERSION}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                            std::to_string(EIGEN_MINOR_VERSION)}}},
          {"started", m.started},
          {"finished", m.finished},
          {"inputs", inputs}};
}

namespace {

ordered_json vec(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// NaN and infinities become null.
ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

}  // namespace

ordered_json fit_report(const FittedModel& fit) {
  ordered_json params = ordered_json::array();
  for (int j = 0; j < fit.k(); ++j) {
    const auto& e = fit.spec.params[j];
    params.push_back({{"label", e.label}, {"matrix", to_string(e.matrix)}, {"estimate", fit.theta_hat(j)}});
  }
  auto ic = information_criteria(fit);
  return {{"n", fit.n()},
          {"k", fit.k()},
          {"loglik", fit.loglik_total},
          {"aic", ic.aic},
          {"bic", ic.bic},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"grad_max", fit.grad_max},
          {"parameters", params},
          {"warnings", fit.warnings}};
}

ordered_json comparison_report(const ComparisonResult& r, const std::optional<BootstrapResult>& bootstrap) {
  ordered_json j;
  j["models"] = {{"a", r.model_a}, {"b", r.model_b}};
  j["n"] = r.n;
  j["k"] = r.k;
  j["q"] = r.q;
  j["omega_hat_sq"] = r.omega_hat_sq;
  j["eigenvalues"] = vec(r.w_eigenvalues);
  j["p_distinguish"] = r.p_distinguish;
  j["lr"] = r.lr_ab;
  j["z"] = number(r.z_lrt);
  j["p_one"] = r.p_lrt_one_sided;
  j["p_two"] = r.p_lrt_two_sided;
  j["lrt_applicable"] = r.lrt_applicable;
  j["ic"] = {{"criterion", to_string(r.criterion)},
             {"aic_diff", r.aic_diff},
             {"bic_diff", r.bic_diff},
             {"ci", {r.ic_ci.lower, r.ic_ci.upper}},
             {"alpha", r.ci_alpha}};
  if (bootstrap) {
    j["ic"]["bootstrap"] = {{"ci", {bootstrap->interval.lower, bootstrap->interval.upper}},
                            {"reps", bootstrap->requested},
                            {"dropped", bootstrap->dropped}};
  }
  if (r.nested) {
    j["nested"] = {{"p_variance", r.p_nested_variance}, {"p_lr", r.p_nested_lr}, {"p_classical", r.p_classical}};
  }
  j["decision"] = to_string(r.decision);
  j["warnings"] = r.warnings;
  return j;
}

ordered_json to_json(const SimSummary& s) {
  ordered_json rates = ordered_json::object();
  for (const auto& [k, v] : s.reject_rates) rates[k] = v;
  ordered_json iv = ordered_json::object();
  for (const auto& [k, v] : s.intervals) {
    iv[k] = {{"coverage", v.coverage},   {"miss_low", v.miss_low},       {"miss_high", v.miss_high},
             {"width", v.mean_width},    {"endpoint_sd", v.endpoint_sd}, {"count", v.count}};
  }
  return {{"study", s.study}, {"pair", s.pair},   {"n", s.n},          {"d", s.d},        {"reps", s.reps},
          {"dropped", s.dropped}, {"truth", s.truth}, {"population_truth", s.population_truth}, {"rates", rates}, {"intervals", iv}};
}

std::string comparison_text(const ComparisonResult& r) {
  char buf[256];
  std::ostringstream out;
  out << "A: " << r.model_a << " (k = " << r.k << ")\n";
  out << "B: " << r.model_b << " (k = " << r.q << ")\n";
  std::snprintf(buf, sizeof buf, "n = %ld, omega^2 = %.6g, p(distinguishable) = %.4g\n", static_cast<long>(r.n),
                r.omega_hat_sq, r.p_distinguish);
  out << buf;
  std::snprintf(buf, sizeof buf, "LRT z = %.4f, p two-sided = %.4g, one-sided = %.4g%s\n", r.z_lrt,
                r.p_lrt_two_sided, r.p_lrt_one_sided, r.lrt_applicable ? "" : " (not applicable)");
  out << buf;
  if (r.nested) {
    std::snprintf(buf, sizeof buf, "nested: p(LR) = %.4g, p(classical) = %.4g\n", r.p_nested_lr, r.p_classical);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "AIC diff = %.3f, BIC diff = %.3f, %s %.0f%% CI [%.3f, %.3f]\n", r.aic_diff,
                r.bic_diff, r.criterion == Criterion::AIC ? "AIC" : "BIC", 100.0 * (1.0 - r.ci_alpha), r.ic_ci.lower,
                r.ic_ci.upper);
  out << buf;
  out << "decision: " << to_string(r.decision) << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return out.str();
}

}  // namespace vsem
