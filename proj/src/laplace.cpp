#include "lgqr/laplace.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "lgqr/errors.hpp"
#include "lgqr/rng.hpp"

namespace lgqr {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double sample_variance(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

double empirical_quantile(Eigen::VectorXd v, double tau) {
  std::sort(v.begin(), v.end());
  double h = tau * static_cast<double>(v.size() - 1);
  auto lo = static_cast<Eigen::Index>(std::floor(h));
  if (lo + 1 >= v.size()) return v[v.size() - 1];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}
}  // namespace

QuantileModel make_model(QuantileLevel tau, LatentDesign latent, Eigen::MatrixXd X,
                         CurvatureMethod method) {
  QuantileModel m{tau, std::move(X), std::move(latent), LaplaceConfig{}};
  m.approx.curvature = method;
  m.approx.tkc.min_drop = std::holds_alternative<GpDesign>(m.latent) ? 10.0 : 0.1;
  if (m.X.size() > 0 && m.X.rows() != design_rows(m.latent)) {
    throw std::invalid_argument("make_model: X rows must match the design");
  }
  return m;
}

LaplaceResult laplace_log_marginal(const QuantileModel& model, const Eigen::VectorXd& y,
                                   const PriorCovParams& theta,
                                   const Eigen::VectorXd& beta, ALScale lambda,
                                   const Eigen::VectorXd* warm_start) {
  const int n = design_rows(model.latent);
  if (y.size() != n) throw std::invalid_argument("laplace_log_marginal: y length mismatch");
  const double alpha = model.approx.tempering;
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("laplace_log_marginal: tempering must lie in (0, 1]");
  }
  Eigen::VectorXd offset;
  if (model.X.cols() > 0) {
    if (beta.size() != model.X.cols()) {
      throw std::invalid_argument("laplace_log_marginal: beta length mismatch");
    }
    offset = model.X * beta;
  } else {
    offset = Eigen::VectorXd::Zero(n);
  }

  LaplaceResult res;
  res.prior = PriorCovariance::build(model.latent, theta);
  res.mode = find_mode(y, offset, model.latent, res.prior, lambda, model.tau, alpha,
                       model.approx.mode, warm_start);

  if (model.approx.curvature == CurvatureMethod::tkc) {
    try {
      res.curvature = estimate_curvature(CurvatureMethod::tkc, y, res.mode.mu, lambda,
                                         model.tau, model.approx.tkc);
    } catch (const DegenerateCurvature&) {
      res.curvature = estimate_curvature(CurvatureMethod::fisher, y, res.mode.mu,
                                         lambda, model.tau, model.approx.tkc);
      res.curvature_fallback = true;
    }
  } else {
    res.curvature = estimate_curvature(CurvatureMethod::fisher, y, res.mode.mu, lambda,
                                       model.tau, model.approx.tkc);
  }
  res.c_eff = alpha * res.curvature.c;
  res.posterior = PosteriorPrecision::build(model.latent, res.prior, res.c_eff);

  // The (m/2) log 2pi of the Laplace integral cancels the prior normalizer
  // analytically; what is left is exact for zero observations.
  res.log_marginal = alpha * total_loglik(y, res.mode.mu, lambda, model.tau) -
                     0.5 * res.prior.quad_form(res.mode.b) +
                     0.5 * (res.prior.log_det_precision() - res.posterior.log_det());
  return res;
}

namespace {

struct Packing {
  int n_var = 0;   // leading log-variance entries
  bool gp = false;  // gp: [log sigma2, log length]
  int p = 0;
  int dim() const { return (gp ? 2 : n_var) + p + 1; }

  Eigen::VectorXd pack(const PriorCovParams& theta, const Eigen::VectorXd& beta,
                       double lambda) const {
    Eigen::VectorXd x(dim());
    int at = 0;
    if (gp) {
      x[at++] = std::log(theta.gp_sigma2);
      x[at++] = std::log(theta.gp_length);
    } else {
      for (int i = 0; i < n_var; ++i) x[at++] = std::log(theta.sigma2[i]);
    }
    for (int i = 0; i < p; ++i) x[at++] = beta[i];
    x[at] = std::log(lambda);
    return x;
  }

  void unpack(const Eigen::VectorXd& x, PriorCovParams& theta, Eigen::VectorXd& beta,
              double& lambda) const {
    int at = 0;
    if (gp) {
      theta.gp_sigma2 = std::exp(x[at++]);
      theta.gp_length = std::exp(x[at++]);
    } else {
      theta.sigma2.assign(n_var, 0.0);
      for (int i = 0; i < n_var; ++i) theta.sigma2[i] = std::exp(x[at++]);
    }
    beta.resize(p);
    for (int i = 0; i < p; ++i) beta[i] = x[at++];
    lambda = std::exp(x[at]);
  }
};

Packing make_packing(const QuantileModel& model) {
  Packing pk;
  pk.p = static_cast<int>(model.X.cols());
  if (std::holds_alternative<GroupedDesign>(model.latent)) {
    pk.n_var = 1;
  } else if (std::holds_alternative<CrossedDesign>(model.latent)) {
    pk.n_var = 2;
  } else {
    pk.gp = true;
  }
  return pk;
}

// Moment-based starting point. For the AL scale, E[rho_tau(eps)] = lambda
// exactly (both branches integrate to tau*lambda and (1-tau)*lambda), so the
// sample mean pinball loss at the empirical tau-quantile is the initializer
// with no further constant.
Eigen::VectorXd initial_point(const QuantileModel& model, const Eigen::VectorXd& y,
                              const Packing& pk) {
  PriorCovParams theta;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pk.p);
  Eigen::VectorXd resid = y;
  if (pk.p > 0) {
    beta = model.X.colPivHouseholderQr().solve(y);
    resid = y - model.X * beta;
  }
  double vary = sample_variance(y);
  double half = std::max(0.5 * vary, 1e-8);
  if (pk.gp) {
    theta.gp_sigma2 = half;
    const auto& coords = std::get<GpDesign>(model.latent).coords;
    double range = 0.0;
    for (Eigen::Index j = 0; j < coords.cols(); ++j) {
      range = std::max(range, coords.col(j).maxCoeff() - coords.col(j).minCoeff());
    }
    theta.gp_length = std::max(0.2 * range, 1e-3);
  } else {
    theta.sigma2.assign(pk.n_var, half);
  }
  double q = empirical_quantile(resid, model.tau.tau);
  double mp = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    mp += pinball_loss(resid[i] - q, model.tau);
  }
  mp /= std::max<double>(1.0, static_cast<double>(resid.size()));
  double lambda = std::max(mp, 1e-8);
  return pk.pack(theta, beta, lambda);
}

}  // namespace

FitResult fit(const QuantileModel& model, const Eigen::VectorXd& y, const FitConfig& cfg) {
  const Packing pk = make_packing(model);
  const int d = pk.dim();

  FitResult out;
  Eigen::VectorXd warm;  // mode warm start threaded through every evaluation

  auto eval = [&](const Eigen::VectorXd& x) -> double {
    if (x.lpNorm<Eigen::Infinity>() > 50.0) return kInf;  // keep exp() finite
    PriorCovParams theta;
    Eigen::VectorXd beta;
    double lambda;
    pk.unpack(x, theta, beta, lambda);
    ++out.evaluations;
    try {
      LaplaceResult r = laplace_log_marginal(model, y, theta, beta, ALScale(lambda),
                                             warm.size() ? &warm : nullptr);
      warm = r.mode.b;
      return -r.log_marginal;
    } catch (const NumericalError&) {
      return kInf;
    }
  };

  auto gradient = [&](const Eigen::VectorXd& x, double fx) {
    Eigen::VectorXd g(d);
    for (int i = 0; i < d; ++i) {
      double h = cfg.fd_step * (1.0 + std::abs(x[i]));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fp = eval(xp), fm = eval(xm);
      if (std::isfinite(fp) && std::isfinite(fm)) {
        g[i] = (fp - fm) / (2.0 * h);
      } else if (std::isfinite(fp)) {
        g[i] = (fp - fx) / h;
      } else if (std::isfinite(fm)) {
        g[i] = (fx - fm) / h;
      } else {
        g[i] = 0.0;
      }
    }
    return g;
  };

  Eigen::VectorXd x_init = initial_point(model, y, pk);
  Eigen::VectorXd best_x;
  double best_f = kInf;
  bool hit_max = false;

  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    Eigen::VectorXd x = x_init;
    if (r > 0) {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      for (int i = 0; i < d; ++i) x[i] += cfg.jitter_sd * rng.normal();
    }
    double f = eval(x);
    if (!std::isfinite(f)) continue;
    out.trace.push_back(-f);
    Eigen::VectorXd g = gradient(x, f);
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
    bool converged = false;
    for (int it = 0; it < cfg.max_iter; ++it) {
      Eigen::VectorXd dir = -h_inv * g;
      double slope = dir.dot(g);
      if (!(slope < 0.0)) {
        h_inv.setIdentity();
        dir = -g;
        slope = dir.dot(g);
        if (!(slope < 0.0)) {
          converged = true;  // gradient numerically zero
          break;
        }
      }
      double t = 1.0;
      bool accepted = false;
      double f_new = f;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
        double cand = eval(x + t * dir);
        if (std::isfinite(cand) && cand <= f + 1e-4 * t * slope) {
          f_new = cand;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        converged = true;  // no descent at fp resolution
        break;
      }
      Eigen::VectorXd x_new = x + t * dir;
      Eigen::VectorXd g_new = gradient(x_new, f_new);
      Eigen::VectorXd s = x_new - x;
      Eigen::VectorXd yv = g_new - g;
      double sy = s.dot(yv);
      if (sy > 1e-12 * s.norm() * yv.norm()) {
        Eigen::MatrixXd left =
            Eigen::MatrixXd::Identity(d, d) - s * yv.transpose() / sy;
        h_inv = left * h_inv * left.transpose();
        h_inv += s * s.transpose() / sy;
      }
      double rel = std::abs(f_new - f) / (1.0 + std::abs(f_new));
      x = x_new;
      f = f_new;
      g = g_new;
      out.trace.push_back(-f);
      if (rel < cfg.rel_tol) {
        converged = true;
        break;
      }
    }
    if (!converged) hit_max = true;
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }

  if (!std::isfinite(best_f)) {
    throw NumericalError("fit: no restart produced a finite objective");
  }

  pk.unpack(best_x, out.theta, out.beta, out.lambda);
  out.approx = laplace_log_marginal(model, y, out.theta, out.beta, ALScale(out.lambda),
                                    warm.size() ? &warm : nullptr);
  out.log_marginal = out.approx.log_marginal;
  out.warnings.curvature_fallback = out.approx.curvature_fallback;
  out.warnings.bandwidth_below_threshold = out.approx.curvature.below_threshold;
  out.warnings.optimizer_hit_max_iter = hit_max;
  return out;
}

PosteriorSummary summarize(const QuantileModel& model, const FitResult& fr) {
  return PosteriorSummary{model.latent, fr.theta,          fr.beta,
                          fr.lambda,    fr.approx.mode.b, fr.approx.c_eff};
}

Prediction predict(const PosteriorSummary& s, const PredictRequest& req) {
  PriorCovariance prior = PriorCovariance::build(s.latent, s.theta);
  PosteriorPrecision post = PosteriorPrecision::build(s.latent, prior, s.c_eff);

  int n_star;
  if (std::holds_alternative<GpDesign>(s.latent)) {
    n_star = static_cast<int>(req.coords.rows());
  } else {
    n_star = static_cast<int>(req.group.size());
  }
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n_star);
  if (s.beta.size() > 0) {
    if (req.X.rows() != n_star || req.X.cols() != s.beta.size()) {
      throw std::invalid_argument("predict: X shape mismatch");
    }
    fixed = req.X * s.beta;
  }

  Prediction out;
  out.quantile.resize(n_star);
  out.latent_var.resize(n_star);

  if (const auto* g = std::get_if<GroupedDesign>(&s.latent)) {
    for (int i = 0; i < n_star; ++i) {
      int id = req.group[static_cast<size_t>(i)];
      if (id >= 0 && id < g->levels) {
        out.quantile[i] = fixed[i] + s.b_hat[id];
        out.latent_var[i] = 1.0 / post.diag()[id];
      } else {
        out.quantile[i] = fixed[i];
        out.latent_var[i] = s.theta.sigma2[0];
      }
    }
    return out;
  }

  if (const auto* c = std::get_if<CrossedDesign>(&s.latent)) {
    if (req.group2.size() != static_cast<size_t>(n_star)) {
      throw std::invalid_argument("predict: crossed design needs both factors");
    }
    int m1 = c->first.levels;
    std::unordered_map<int, Eigen::VectorXd> cols;
    auto column = [&](int j) -> const Eigen::VectorXd& {
      auto it = cols.find(j);
      if (it == cols.end()) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(post.dim());
        e[j] = 1.0;
        it = cols.emplace(j, post.solve(e)).first;
      }
      return it->second;
    };
    for (int i = 0; i < n_star; ++i) {
      int j = req.group[static_cast<size_t>(i)];
      int k = req.group2[static_cast<size_t>(i)];
      bool seen1 = j >= 0 && j < m1;
      bool seen2 = k >= 0 && k < c->second.levels;
      double q = fixed[i];
      double var = 0.0;
      if (seen1) {
        q += s.b_hat[j];
        var += column(j)[j];
      } else {
        var += s.theta.sigma2[0];
      }
      if (seen2) {
        q += s.b_hat[m1 + k];
        var += column(m1 + k)[m1 + k];
      } else {
        var += s.theta.sigma2[1];
      }
      if (seen1 && seen2) var += 2.0 * column(j)[m1 + k];
      out.quantile[i] = q;
      out.latent_var[i] = std::max(var, 0.0);
    }
    return out;
  }

  const auto& gp = std::get<GpDesign>(s.latent);
  if (req.coords.cols() != gp.coords.cols()) {
    throw std::invalid_argument("predict: coordinate dimension mismatch");
  }
  Eigen::MatrixXd k_star =
      matern32_matrix(req.coords, gp.coords, s.theta.gp_sigma2, s.theta.gp_length);
  Eigen::VectorXd alpha = prior.gp_llt().solve(s.b_hat);
  out.quantile = fixed + k_star * alpha;
  if (s.c_eff > 0.0) {
    // var = k** - k*' (K + W^-1)^-1 k* with W = c I
    Eigen::MatrixXd kw = prior.gp_cov();
    kw.diagonal().array() += 1.0 / s.c_eff;
    Eigen::LLT<Eigen::MatrixXd> llt(kw);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("predict: K + W^-1 factorization failed");
    }
    Eigen::MatrixXd v = llt.solve(k_star.transpose());
    for (int i = 0; i < n_star; ++i) {
      out.latent_var[i] = std::max(s.theta.gp_sigma2 - k_star.row(i).dot(v.col(i)), 0.0);
    }
  } else {
    out.latent_var.setConstant(s.theta.gp_sigma2);
  }
  return out;
}

}  // namespace lgqr
