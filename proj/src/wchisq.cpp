#include "vsem/wchisq.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>

namespace vsem {

namespace {

// GSL's default handler aborts; every call site here checks the returned status instead.
const bool kGslHandlerOff = [] {
  gsl_set_error_handler_off();
  return true;
}();

struct ImhofTerms {
  const std::vector<double>* w;
  double x;
};

// phi(u) = 1/2 sum atan(w_j u); rho(u) = prod (1 + w_j^2 u^2)^(1/4)
inline void phase_amplitude(const std::vector<double>& w, double u, double& phi, double& log_rho) {
  phi = 0.0;
  log_rho = 0.0;
  for (double l : w) {
    phi += std::atan(l * u);
    log_rho += std::log1p(l * l * u * u);
  }
  phi *= 0.5;
  log_rho *= 0.25;
}

// Full Imhof integrand sin(theta(u)) / (u rho(u)), theta(u) = phi(u) - x u / 2.
double imhof_integrand(double u, void* params) {
  const auto* t = static_cast<const ImhofTerms*>(params);
  if (u == 0.0) {
    double s = 0.0;
    for (double l : *t->w) s += l;
    return 0.5 * (s - t->x);
  }
  double phi, log_rho;
  phase_amplitude(*t->w, u, phi, log_rho);
  return std::sin(phi - 0.5 * t->x * u) / (u * std::exp(log_rho));
}

// Amplitudes for the Fourier split sin(phi - w u) = sin(phi) cos(w u) - cos(phi) sin(w u).
double sin_amplitude(double u, void* params) {
  const auto* t = static_cast<const ImhofTerms*>(params);
  double phi, log_rho;
  phase_amplitude(*t->w, u, phi, log_rho);
  return std::sin(phi) / (u * std::exp(log_rho));
}

double cos_amplitude(double u, void* params) {
  const auto* t = static_cast<const ImhofTerms*>(params);
  double phi, log_rho;
  phase_amplitude(*t->w, u, phi, log_rho);
  return std::cos(phi) / (u * std::exp(log_rho));
}

struct WorkspaceDeleter {
  void operator()(gsl_integration_workspace* w) const { gsl_integration_workspace_free(w); }
};
struct QawoDeleter {
  void operator()(gsl_integration_qawo_table* t) const { gsl_integration_qawo_table_free(t); }
};
using Workspace = std::unique_ptr<gsl_integration_workspace, WorkspaceDeleter>;
using QawoTable = std::unique_ptr<gsl_integration_qawo_table, QawoDeleter>;

constexpr size_t kLimit = 2000;
constexpr double kEpsAbs = 1e-10;

// Integral of the Imhof integrand over (0, inf). Returns a GSL status.
int imhof_integral(const std::vector<double>& w, double x, double& result, double& abserr) {
  ImhofTerms terms{&w, x};
  double wmax = 0.0;
  for (double l : w) wmax = std::max(wmax, std::abs(l));
  const double omega = 0.5 * x;
  // Split point: past the curvature of every atan term and at least a few oscillations in.
  double split = 20.0 / wmax;
  if (omega != 0.0) split = std::max(split, 8.0 * std::numbers::pi / std::abs(omega));
  split = std::min(split, 2000.0 / wmax);

  Workspace ws(gsl_integration_workspace_alloc(kLimit));
  gsl_function full{&imhof_integrand, &terms};
  double head = 0.0, head_err = 0.0;
  int status = gsl_integration_qag(&full, 0.0, split, kEpsAbs, 1e-12, kLimit, GSL_INTEG_GAUSS61, ws.get(), &head,
                                   &head_err);
  if (status != GSL_SUCCESS && head_err > 1e-8) return status;

  double tail = 0.0, tail_err = 0.0;
  if (std::abs(omega) * split < 1e-3) {
    // Essentially no oscillation left: plain semi-infinite quadrature.
    status = gsl_integration_qagiu(&full, split, kEpsAbs, 1e-10, kLimit, ws.get(), &tail, &tail_err);
    if (status != GSL_SUCCESS && tail_err > 1e-8) return status;
  } else {
    Workspace cycle(gsl_integration_workspace_alloc(kLimit));
    QawoTable cos_table(gsl_integration_qawo_table_alloc(std::abs(omega), 1.0, GSL_INTEG_COSINE, 50));
    QawoTable sin_table(gsl_integration_qawo_table_alloc(std::abs(omega), 1.0, GSL_INTEG_SINE, 50));
    gsl_function fs{&sin_amplitude, &terms};
    gsl_function fc{&cos_amplitude, &terms};
    double c_part = 0.0, c_err = 0.0, s_part = 0.0, s_err = 0.0;
    status = gsl_integration_qawf(&fs, split, kEpsAbs, kLimit, ws.get(), cycle.get(), cos_table.get(), &c_part,
                                  &c_err);
    if (status != GSL_SUCCESS && c_err > 1e-8) return status;
    status = gsl_integration_qawf(&fc, split, kEpsAbs, kLimit, ws.get(), cycle.get(), sin_table.get(), &s_part,
                                  &s_err);
    if (status != GSL_SUCCESS && s_err > 1e-8) return status;
    // sin(w u) with w = omega < 0 flips sign.
    double sign = omega < 0.0 ? -1.0 : 1.0;
    tail = c_part - sign * s_part;
    tail_err = c_err + s_err;
  }
  result = head + tail;
  abserr = head_err + tail_err;
  return GSL_SUCCESS;
}

std::mt19937_64 make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

WeightedChiSq::WeightedChiSq(std::vector<double> weights) {
  double wmax = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("weighted chi-square: non-finite weight");
    wmax = std::max(wmax, std::abs(w));
  }
  for (double w : weights) {
    if (wmax > 0.0 && std::abs(w) >= 1e-10 * wmax) weights_.push_back(w);
  }
}

WeightedChiSq::Probability WeightedChiSq::cdf_detail(double x) const {
  Probability out;
  if (std::isnan(x)) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  if (degenerate()) {
    out.value = x >= 0.0 ? 1.0 : 0.0;
    return out;
  }
  bool all_pos = std::all_of(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; });
  bool all_neg = std::all_of(weights_.begin(), weights_.end(), [](double w) { return w < 0.0; });
  if ((all_pos && x <= 0.0) || x == -std::numeric_limits<double>::infinity()) {
    out.value = 0.0;
    return out;
  }
  if ((all_neg && x >= 0.0) || x == std::numeric_limits<double>::infinity()) {
    out.value = 1.0;
    return out;
  }
  double integral = 0.0, err = 0.0;
  int status = imhof_integral(weights_, x, integral, err);
  if (status == GSL_SUCCESS && std::isfinite(integral)) {
    double upper = 0.5 + integral / std::numbers::pi;
    out.value = std::clamp(1.0 - upper, 0.0, 1.0);
    out.error = err / std::numbers::pi;
    return out;
  }
  constexpr std::size_t kDraws = 1000000;
  auto draws = sample(kDraws, 0x5eedULL);
  double hits = static_cast<double>(std::count_if(draws.begin(), draws.end(), [x](double q) { return q <= x; }));
  out.value = hits / kDraws;
  out.error = std::sqrt(std::max(out.value * (1.0 - out.value), 1.0 / kDraws) / kDraws);
  out.monte_carlo = true;
  return out;
}

double WeightedChiSq::upper_p(double x) const { return std::clamp(1.0 - cdf(x), 0.0, 1.0); }

double WeightedChiSq::mean() const {
  double s = 0.0;
  for (double w : weights_) s += w;
  return s;
}

double WeightedChiSq::variance() const {
  double s = 0.0;
  for (double w : weights_) s += 2.0 * w * w;
  return s;
}

double WeightedChiSq::quantile(double prob) const {
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("quantile: probability must be in (0, 1)");
  if (degenerate()) return 0.0;
  double sd = std::sqrt(variance());
  double lo = mean() - sd, hi = mean() + sd;
  while (cdf(lo) > prob) lo -= 2.0 * sd;
  while (cdf(hi) < prob) hi += 2.0 * sd;
  for (int it = 0; it < 200 && hi - lo > 1e-10 * (1.0 + std::abs(hi)); ++it) {
    double mid = 0.5 * (lo + hi);
    if (cdf(mid) < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

std::vector<double> WeightedChiSq::sample(std::size_t n, std::uint64_t seed) const {
  auto eng = make_engine(seed);
  std::normal_distribution<double> norm;
  std::vector<double> out(n, 0.0);
  for (auto& q : out) {
    for (double w : weights_) {
      double z = norm(eng);
      q += w * z * z;
    }
  }
  return out;
}

}  // namespace vsem
