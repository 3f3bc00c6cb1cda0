#include "vsem/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vsem/error.hpp"

namespace vsem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)

}  // namespace

MomentModel::MomentModel(const ModelSpec& spec) : spec_(spec) {
  const int p = spec.p(), nv = spec.n_vars();
  b_fixed_ = MatrixXd::Zero(nv, nv);
  psi_fixed_ = MatrixXd::Zero(nv, nv);
  alpha_fixed_ = VectorXd::Zero(nv);
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nv; ++j) {
      const Cell& c = spec.beta(i, j);
      if (!c.is_free()) b_fixed_(i, j) = c.value;
    }
    for (int j = 0; j <= i; ++j) {
      const Cell& c = spec.psi(i, j);
      if (!c.is_free()) psi_fixed_(i, j) = psi_fixed_(j, i) = c.value;
    }
    const Cell& c = spec.nu_alpha(i, 0);
    if (!c.is_free()) alpha_fixed_(i) = c.value;
  }
  for (int i = 0; i < p; ++i) {
    for (int l = 0; l < spec.m(); ++l) {
      const Cell& c = spec.lambda(i, l);
      if (!c.is_free()) b_fixed_(i, p + l) = c.value;
    }
  }
  slots_.reserve(spec.params.size());
  for (const auto& e : spec.params) {
    switch (e.matrix) {
      case MatrixKind::Lambda: slots_.push_back({MatrixKind::Beta, e.row, p + e.col}); break;
      case MatrixKind::Beta: slots_.push_back({MatrixKind::Beta, e.row, e.col}); break;
      case MatrixKind::Psi: slots_.push_back({MatrixKind::Psi, e.row, e.col}); break;
      case MatrixKind::Mean: slots_.push_back({MatrixKind::Mean, e.row, 0}); break;
    }
  }
}

bool MomentModel::evaluate(const VectorXd& theta, State& out) const {
  const int p = spec_.p(), nv = spec_.n_vars();
  if (theta.size() != k()) throw NumericalError("parameter vector has the wrong length");
  if (!theta.allFinite()) return false;
  MatrixXd b = b_fixed_;
  MatrixXd psi = psi_fixed_;
  VectorXd alpha = alpha_fixed_;
  for (int j = 0; j < k(); ++j) {
    const Slot& s = slots_[j];
    switch (s.kind) {
      case MatrixKind::Beta: b(s.row, s.col) = theta(j); break;
      case MatrixKind::Psi: psi(s.row, s.col) = psi(s.col, s.row) = theta(j); break;
      case MatrixKind::Mean: alpha(s.row) = theta(j); break;
      default: break;
    }
  }
  MatrixXd ib = MatrixXd::Identity(nv, nv) - b;
  Eigen::PartialPivLU<MatrixXd> lu(ib);
  double det = lu.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) return false;
  out.a = lu.inverse();
  out.sigma_all = out.a * psi * out.a.transpose();
  out.mu_all = out.a * alpha;
  out.moments.sigma = out.sigma_all.topLeftCorner(p, p);
  out.moments.sigma = 0.5 * (out.moments.sigma + out.moments.sigma.transpose()).eval();
  out.moments.mu = spec_.meanstructure ? VectorXd(out.mu_all.head(p)) : VectorXd::Zero(p);
  return true;
}

double MomentModel::average_loglik(const State& st, const SampleMoments& sm) const {
  const auto& sigma = st.moments.sigma;
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const MatrixXd& l = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return -std::numeric_limits<double>::infinity();
    logdet += 2.0 * std::log(l(i, i));
  }
  MatrixXd s = sm.cov;
  if (spec_.meanstructure) {
    VectorXd d = sm.mean - st.moments.mu;
    s += d * d.transpose();
  }
  double tr = llt.solve(s).trace();
  return -0.5 * (spec_.p() * kLog2Pi + logdet + tr);
}

VectorXd MomentModel::trace_terms(const State& st, const MatrixXd& m_top) const {
  const int p = spec_.p();
  const auto a_top = st.a.topRows(p);
  MatrixXd ma = m_top * a_top;                             // p x nv
  MatrixXd kmat = st.sigma_all.leftCols(p) * ma;           // nv x nv: Sigma_all G' M G A
  MatrixXd lmat = a_top.transpose() * ma;                  // nv x nv: A' G' M G A
  VectorXd out = VectorXd::Zero(k());
  for (int j = 0; j < k(); ++j) {
    const Slot& s = slots_[j];
    if (s.kind == MatrixKind::Beta) {
      out(j) = 2.0 * kmat(s.col, s.row);
    } else if (s.kind == MatrixKind::Psi) {
      out(j) = s.row == s.col ? lmat(s.row, s.row) : 2.0 * lmat(s.row, s.col);
    }
  }
  return out;
}

bool MomentModel::average_gradient(const State& st, const SampleMoments& sm, VectorXd& grad) const {
  const int p = spec_.p();
  Eigen::LLT<MatrixXd> llt(st.moments.sigma);
  if (llt.info() != Eigen::Success) return false;
  MatrixXd sinv = llt.solve(MatrixXd::Identity(p, p));
  MatrixXd s = sm.cov;
  VectorXd d = VectorXd::Zero(p);
  if (spec_.meanstructure) {
    d = sm.mean - st.moments.mu;
    s += d * d.transpose();
  }
  MatrixXd m = sinv - sinv * s * sinv;
  grad = -0.5 * trace_terms(st, m);
  if (spec_.meanstructure) {
    VectorXd aw = st.a.topRows(p).transpose() * (sinv * d);  // nv
    for (int j = 0; j < k(); ++j) {
      const Slot& sl = slots_[j];
      if (sl.kind == MatrixKind::Mean) {
        grad(j) += aw(sl.row);
      } else if (sl.kind == MatrixKind::Beta) {
        grad(j) += aw(sl.row) * st.mu_all(sl.col);
      }
    }
  }
  return grad.allFinite();
}

void MomentModel::jacobian(const State& st, std::vector<MatrixXd>& dsigma, MatrixXd& dmu) const {
  const int p = spec_.p();
  const auto a_top = st.a.topRows(p);
  const auto s_top = st.sigma_all.topRows(p);
  dsigma.assign(k(), MatrixXd::Zero(p, p));
  dmu = MatrixXd::Zero(p, k());
  for (int j = 0; j < k(); ++j) {
    const Slot& s = slots_[j];
    switch (s.kind) {
      case MatrixKind::Beta: {
        MatrixXd uv = a_top.col(s.row) * s_top.col(s.col).transpose();
        dsigma[j] = uv + uv.transpose();
        if (spec_.meanstructure) dmu.col(j) = a_top.col(s.row) * st.mu_all(s.col);
        break;
      }
      case MatrixKind::Psi: {
        if (s.row == s.col) {
          dsigma[j] = a_top.col(s.row) * a_top.col(s.row).transpose();
        } else {
          MatrixXd uv = a_top.col(s.row) * a_top.col(s.col).transpose();
          dsigma[j] = uv + uv.transpose();
        }
        break;
      }
      case MatrixKind::Mean:
        dmu.col(j) = a_top.col(s.row);
        break;
      default:
        break;
    }
  }
}

MatrixXd MomentModel::expected_information(const State& st) const {
  Eigen::LLT<MatrixXd> llt(st.moments.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("implied covariance is not positive definite");
  std::vector<MatrixXd> dsigma;
  MatrixXd dmu;
  jacobian(st, dsigma, dmu);
  std::vector<MatrixXd> c(k());
  for (int j = 0; j < k(); ++j) c[j] = llt.solve(dsigma[j]);
  MatrixXd sinv_dmu = llt.solve(dmu);
  MatrixXd info(k(), k());
  for (int a = 0; a < k(); ++a) {
    for (int b = 0; b <= a; ++b) {
      // tr(C_a C_b) = sum_ij C_a(i,j) C_b(j,i)
      double tr = (c[a].array() * c[b].transpose().array()).sum();
      double v = 0.5 * tr + dmu.col(a).dot(sinv_dmu.col(b));
      info(a, b) = info(b, a) = v;
    }
  }
  return info;
}

MatrixXd MomentModel::casewise_scores(const State& st, const MatrixXd& cases, const VectorXd& mu) const {
  const int p = spec_.p();
  const Eigen::Index n = cases.rows();
  Eigen::LLT<MatrixXd> llt(st.moments.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("implied covariance is not positive definite");
  MatrixXd r = cases.rowwise() - mu.transpose();
  MatrixXd z = llt.solve(r.transpose()).transpose();  // n x p, rows Sigma^-1 r_i
  MatrixXd za = z * st.a.topRows(p);                   // n x nv
  MatrixXd zs = z * st.sigma_all.topRows(p);           // n x nv
  VectorXd tr = trace_terms(st, llt.solve(MatrixXd::Identity(p, p)));
  MatrixXd scores(n, k());
  for (int j = 0; j < k(); ++j) {
    const Slot& s = slots_[j];
    switch (s.kind) {
      case MatrixKind::Beta:
        scores.col(j) = (za.col(s.row).array() * zs.col(s.col).array()).matrix();
        scores.col(j).array() -= 0.5 * tr(j);
        if (spec_.meanstructure) scores.col(j) += za.col(s.row) * st.mu_all(s.col);
        break;
      case MatrixKind::Psi:
        if (s.row == s.col) {
          scores.col(j) = 0.5 * za.col(s.row).array().square().matrix();
        } else {
          scores.col(j) = (za.col(s.row).array() * za.col(s.col).array()).matrix();
        }
        scores.col(j).array() -= 0.5 * tr(j);
        break;
      case MatrixKind::Mean:
        scores.col(j) = za.col(s.row);
        break;
      default:
        break;
    }
  }
  return scores;
}

ImpliedMoments implied_moments(const ModelSpec& spec, const VectorXd& theta) {
  if (!theta.allFinite()) throw NumericalError("non-finite parameter value");
  MomentModel model(spec);
  MomentModel::State st;
  if (!model.evaluate(theta, st)) throw NumericalError("(I - B) is singular at the given parameters");
  return st.moments;
}

VectorXd casewise_loglik(const ImpliedMoments& mom, const MatrixXd& cases) {
  const Eigen::Index p = mom.sigma.rows();
  if (cases.cols() != p) throw DataError("data column count does not match the implied moments");
  Eigen::LLT<MatrixXd> llt(mom.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance matrix is not positive definite");
  const MatrixXd& l = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) logdet += 2.0 * std::log(l(i, i));
  MatrixXd r = (cases.rowwise() - mom.mu.transpose()).transpose();  // p x n
  llt.matrixL().solveInPlace(r);
  VectorXd quad = r.colwise().squaredNorm().transpose();
  return (-0.5 * (static_cast<double>(p) * kLog2Pi + logdet + quad.array())).matrix();
}

VectorXd resolve_start(const ModelSpec& spec, const SampleMoments& sm) {
  VectorXd x(spec.k());
  for (int j = 0; j < spec.k(); ++j) {
    const auto& e = spec.params[j];
    double v = e.start;
    if (std::isnan(v)) {
      if (e.matrix == MatrixKind::Psi) {
        v = 0.5 * sm.cov(e.row, e.row);
      } else if (e.matrix == MatrixKind::Mean) {
        v = sm.mean(e.row);
      } else {
        v = 0.0;
      }
    }
    x(j) = v;
  }
  return x;
}

namespace {

VectorXd lower_bounds(const ModelSpec& spec, double floor) {
  VectorXd lb(spec.k());
  for (int j = 0; j < spec.k(); ++j) {
    const auto& e = spec.params[j];
    lb(j) = e.is_variance() ? std::max(e.lower, floor) : e.lower;
  }
  return lb;
}

// Box-projected BFGS on f(theta) = -average loglik. The inverse-Hessian approximation is
// seeded with the inverse expected information, which is the exact curvature of f at a
// correctly specified optimum.
class Optimizer {
 public:
  Optimizer(const MomentModel& model, const SampleMoments& sm, const FitOptions& opts)
      : model_(model), sm_(sm), opts_(opts), lb_(lower_bounds(model.spec(), opts.variance_floor)) {}

  Estimate run(VectorXd x) {
    const int k = model_.k();
    Estimate est;
    x = x.cwiseMax(lb_);
    double f = 0.0;
    VectorXd g;
    if (!eval(x, f, g)) {
      est.theta = x;
      est.loglik_total = -std::numeric_limits<double>::infinity();
      est.grad_max = std::numeric_limits<double>::infinity();
      return est;
    }
    MatrixXd h = initial_inverse_hessian(x);
    bool fresh = true;
    int iter = 0;
    for (; iter < opts_.max_iter; ++iter) {
      VectorXd pg = projected_gradient(x, g);
      if (pg.lpNorm<Eigen::Infinity>() <= opts_.grad_tol) {
        est.converged = true;
        break;
      }
      std::vector<int> free;
      for (int j = 0; j < k; ++j) {
        if (!(x(j) <= lb_(j) && g(j) > 0.0)) free.push_back(j);
      }
      VectorXd d = VectorXd::Zero(k);
      for (int a : free) {
        double s = 0.0;
        for (int b : free) s += h(a, b) * g(b);
        d(a) = -s;
      }
      if (g.dot(d) >= 0.0) {
        h = initial_inverse_hessian(x);
        fresh = true;
        d.setZero();
        for (int a : free) {
          double s = 0.0;
          for (int b : free) s += h(a, b) * g(b);
          d(a) = -s;
        }
        if (g.dot(d) >= 0.0) d = -pg;
      }
      double t = 1.0;
      VectorXd xn, gn;
      double fn = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        xn = (x + t * d).cwiseMax(lb_);
        if (eval(xn, fn, gn) && fn <= f + 1e-4 * g.dot(xn - x)) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted || (xn - x).lpNorm<Eigen::Infinity>() == 0.0) {
        if (fresh) break;
        h = initial_inverse_hessian(x);
        fresh = true;
        continue;
      }
      VectorXd s = xn - x;
      VectorXd y = gn - g;
      double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        double rho = 1.0 / sy;
        VectorXd hy = h * y;
        double yhy = y.dot(hy);
        h += (rho * rho * yhy + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      }
      fresh = false;
      x = xn;
      f = fn;
      g = gn;
    }
    est.theta = x;
    est.iterations = iter;
    est.loglik_total = -f * static_cast<double>(sm_.n);
    est.grad_max = projected_gradient(x, g).lpNorm<Eigen::Infinity>();
    for (int j = 0; j < k; ++j) {
      if (model_.spec().params[j].is_variance() && x(j) <= lb_(j)) est.at_bound.push_back(j);
    }
    return est;
  }

 private:
  bool eval(const VectorXd& x, double& f, VectorXd& g) {
    if (!model_.evaluate(x, st_)) return false;
    double ll = model_.average_loglik(st_, sm_);
    if (!std::isfinite(ll)) return false;
    if (!model_.average_gradient(st_, sm_, g)) return false;
    f = -ll;
    g = -g;
    return true;
  }

  VectorXd projected_gradient(const VectorXd& x, const VectorXd& g) const {
    VectorXd pg = g;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      if (x(j) <= lb_(j) && g(j) > 0.0) pg(j) = 0.0;
    }
    return pg;
  }

  MatrixXd initial_inverse_hessian(const VectorXd& x) {
    const int k = model_.k();
    MomentModel::State st;
    if (model_.evaluate(x, st)) {
      try {
        MatrixXd info = model_.expected_information(st);
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-10) {
          MatrixXd inv = ldlt.solve(MatrixXd::Identity(k, k));
          if (inv.allFinite()) return inv;
        }
      } catch (const NumericalError&) {
      }
    }
    return MatrixXd::Identity(k, k);
  }

  const MomentModel& model_;
  const SampleMoments& sm_;
  const FitOptions& opts_;
  VectorXd lb_;
  MomentModel::State st_;
};

}  // namespace

Estimate fit_moments(const ModelSpec& spec, const SampleMoments& sm, const FitOptions& opts) {
  return fit_moments(MomentModel(spec), sm, opts);
}

Estimate fit_moments(const MomentModel& model, const SampleMoments& sm, const FitOptions& opts) {
  VectorXd x = opts.start ? *opts.start : resolve_start(model.spec(), sm);
  if (x.size() != model.k()) throw NumericalError("start vector has the wrong length");
  return Optimizer(model, sm, opts).run(std::move(x));
}

double condition_number(const MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  double lo = sv(sv.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return sv(0) / lo;
}

namespace {

MatrixXd numeric_average_hessian_impl(const MomentModel& model, const SampleMoments& sm, const VectorXd& theta,
                                 const VectorXd& lb) {
  const int k = model.k();
  MatrixXd h(k, k);
  MomentModel::State st;
  VectorXd gp, gm;
  auto grad_at = [&](const VectorXd& x, VectorXd& g) {
    if (!model.evaluate(x, st) || !model.average_gradient(st, sm, g)) {
      throw NumericalError("gradient undefined near the estimate");
    }
  };
  VectorXd g0;
  grad_at(theta, g0);
  for (int j = 0; j < k; ++j) {
    double step = 1e-5 * (1.0 + std::abs(theta(j)));
    VectorXd xp = theta, xm = theta;
    xp(j) += step;
    xm(j) -= step;
    grad_at(xp, gp);
    if (xm(j) < lb(j)) {
      h.col(j) = (gp - g0) / step;
    } else {
      grad_at(xm, gm);
      h.col(j) = (gp - gm) / (2.0 * step);
    }
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

MatrixXd average_hessian(const MomentModel& model, const SampleMoments& sm, const VectorXd& theta,
                         double variance_floor) {
  return numeric_average_hessian_impl(model, sm, theta, lower_bounds(model.spec(), variance_floor));
}

FittedModel fit_ml(const ModelSpec& spec, const Dataset& data, const FitOptions& opts) {
  Dataset aligned = align_to_model(data, spec);
  if (aligned.n() <= spec.k()) {
    throw DataError("need more cases than free parameters (n = " + std::to_string(aligned.n()) +
                    ", k = " + std::to_string(spec.k()) + ")");
  }
  SampleMoments sm = sample_moments(aligned.cases);
  MomentModel model(spec);
  VectorXd x0 = opts.start ? *opts.start : resolve_start(spec, sm);
  if (x0.size() != spec.k()) throw NumericalError("start vector has the wrong length");
  Estimate est = Optimizer(model, sm, opts).run(x0);

  FittedModel fit;
  fit.spec = spec;
  fit.theta_hat = est.theta;
  fit.converged = est.converged;
  fit.iterations = est.iterations;
  fit.grad_max = est.grad_max;
  if (!est.converged) {
    fit.warnings.push_back("optimizer did not converge within " + std::to_string(opts.max_iter) +
                           " iterations (max |gradient| = " + std::to_string(est.grad_max) + ")");
  }
  for (int j : est.at_bound) {
    fit.warnings.push_back("Heywood case: variance '" + spec.params[j].label + "' clamped at lower bound");
  }

  MomentModel::State st;
  if (!model.evaluate(fit.theta_hat, st)) throw NumericalError("(I - B) is singular at the estimate");
  fit.moments = st.moments;
  fit.moments.mu = model.effective_mean(st, sm);
  fit.loglik_casewise = casewise_loglik(fit.moments, aligned.cases);
  fit.loglik_total = fit.loglik_casewise.sum();
  fit.scores = model.casewise_scores(st, aligned.cases, fit.moments.mu);
  fit.expected_info = model.expected_information(st);
  fit.unit_hessian = numeric_average_hessian_impl(model, sm, fit.theta_hat, lower_bounds(spec, opts.variance_floor));
  if (condition_number(fit.unit_hessian) > 1e12) {
    fit.warnings.push_back("average Hessian is numerically singular (condition number > 1e12); check identification");
  }
  return fit;
}

MatrixXd casewise_scores(const FittedModel& fit, const Dataset& data) {
  Dataset aligned = align_to_model(data, fit.spec);
  MomentModel model(fit.spec);
  MomentModel::State st;
  if (!model.evaluate(fit.theta_hat, st)) throw NumericalError("(I - B) is singular at the estimate");
  VectorXd mu = fit.spec.meanstructure ? st.moments.mu : VectorXd(aligned.cases.colwise().mean().transpose());
  return model.casewise_scores(st, aligned.cases, mu);
}

MatrixXd unit_information(const FittedModel& fit) { return -fit.unit_hessian; }

InformationCriteria information_criteria(double loglik_total, int k, Eigen::Index n) {
  InformationCriteria ic;
  ic.aic = -2.0 * loglik_total + 2.0 * k;
  ic.bic = -2.0 * loglik_total + k * std::log(static_cast<double>(n));
  return ic;
}

}  // namespace vsem
