#include "lgqr/mode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lgqr/curvature.hpp"

namespace lgqr {

namespace {

// Exact maximizer of -w * sum_i rho_tau(r_i - b) - b^2 / (2 sigma2): sort the
// residuals and walk the subgradient to its sign change. The slope above the
// k-th order statistic is w * (n tau - k) minus the prior pull b / sigma2.
double solve_separable_coord(std::vector<double>& r, double w, double tau,
                             double sigma2) {
  if (r.empty()) return 0.0;
  std::sort(r.begin(), r.end());
  const int n = static_cast<int>(r.size());
  double below = w * n * tau * sigma2;  // prior-balanced zero left of all kinks
  if (below < r[0]) return below;
  for (int k = 0; k < n; ++k) {
    double upper = w * (n * tau - (k + 1));  // likelihood slope just above r[k]
    if (upper - r[k] / sigma2 <= 0.0) return r[k];
    double zero = upper * sigma2;
    if (k + 1 < n ? zero < r[k + 1] : true) return zero;
  }
  return r[n - 1];  // unreachable: the slope is negative above the last kink
}

}  // namespace

ModeResult find_mode(const Eigen::VectorXd& y, const Eigen::VectorXd& offset,
                     const LatentDesign& design, const PriorCovariance& prior,
                     ALScale lambda, QuantileLevel tau, double tempering,
                     const ModeConfig& cfg, const Eigen::VectorXd* warm_start) {
  const int n = design_rows(design);
  const int m = prior.dim();
  if (y.size() != n || offset.size() != n) {
    throw std::invalid_argument("find_mode: y/offset length mismatch with design");
  }
  if (!(tempering > 0.0 && tempering <= 1.0)) {
    throw std::invalid_argument("find_mode: tempering must lie in (0, 1]");
  }

  auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd& mu) {
    mu = offset + latent_effect(design, b);
    return tempering * total_loglik(y, mu, lambda, tau) + prior.log_density(b);
  };

  ModeResult res;
  res.b = (warm_start && warm_start->size() == m) ? *warm_start
                                                  : Eigen::VectorXd::Zero(m);
  double f = objective(res.b, res.mu);
  if (!std::isfinite(f)) {
    res.b.setZero();
    f = objective(res.b, res.mu);
  }
  res.trace.push_back(f);

  // A grouped design separates per level, so the joint mode is the exact
  // per-level solution; the scoring iteration below creeps when several
  // levels settle onto kinks through a shared line-search step.
  if (const auto* grouped = std::get_if<GroupedDesign>(&design)) {
    std::vector<std::vector<double>> resid(static_cast<size_t>(grouped->levels));
    for (int i = 0; i < n; ++i) {
      resid[static_cast<size_t>(grouped->group[static_cast<size_t>(i)])].push_back(
          y[i] - offset[i]);
    }
    const Eigen::VectorXd& prec = prior.precision_diag();
    double w = tempering / lambda.lambda;
    for (int j = 0; j < m; ++j) {
      res.b[j] = solve_separable_coord(resid[static_cast<size_t>(j)], w, tau.tau,
                                       1.0 / prec[j]);
    }
    f = objective(res.b, res.mu);
    res.trace.push_back(f);
    res.iterations = 1;
    res.converged = true;
    res.objective = f;
    return res;
  }

  // Crossed factors couple every pair of coordinates sharing an observation,
  // so neither the separable solve nor Fisher scoring applies: the scoring
  // step creeps once iterates settle onto kinks (observed at small lambda).
  // Instead maximize the Moreau-smoothed objective, whose check part is
  // quadratic within (-delta(1-tau), delta*tau) of each kink and linear
  // outside, and drive the width delta to zero. Newton with the true smoothed
  // Hessian terminates in a few steps per stage, and the smoothed maximizer
  // is within O(delta) of the mode.
  if (std::get_if<CrossedDesign>(&design)) {
    const double w_lik = tempering / lambda.lambda;
    const double t_hi = tau.tau, t_lo = tau.tau - 1.0;
    Eigen::VectorXd psi(n), hw(n), grad(m), step(m), cand(m), cand_mu(n);
    // Smoothed check sum at width delta; optionally fills the per-observation
    // score psi = clamp(r/delta, tau-1, tau) and Hessian weight 1/delta on the
    // quadratic zone. Returns the envelope value (<= sum of rho_tau).
    auto envelope = [&](const Eigen::VectorXd& mu, double delta,
                        Eigen::VectorXd* score, Eigen::VectorXd* weight) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        double r = y[i] - mu[i];
        if (r >= delta * t_hi) {
          acc += t_hi * (r - 0.5 * delta * t_hi);
          if (score) (*score)[i] = t_hi;
          if (weight) (*weight)[i] = 0.0;
        } else if (r <= delta * t_lo) {
          acc += t_lo * (r - 0.5 * delta * t_lo);
          if (score) (*score)[i] = t_lo;
          if (weight) (*weight)[i] = 0.0;
        } else {
          acc += 0.5 * r * r / delta;
          if (score) (*score)[i] = r / delta;
          if (weight) (*weight)[i] = 1.0 / delta;
        }
      }
      return acc;
    };

    // Exact maximizer along b + t*step. The directional derivative of the
    // smoothed objective is continuous, piecewise linear and strictly
    // decreasing in t, with breaks where a residual crosses a zone edge;
    // sweeping the sorted breaks finds its unique root. Without this the
    // damped iteration creeps through zone churn a few observations per step.
    enum : signed char { kLo = 0, kZone = 1, kHi = 2 };
    Eigen::VectorXd dmu(n), resid(n);
    std::vector<signed char> state(static_cast<size_t>(n));
    struct Event {
      double t;
      int i;
      signed char to;
      bool operator<(const Event& o) const { return t < o.t; }
    };
    std::vector<Event> events;
    auto exact_t = [&](double delta, double pb, double pq) {
      double lin = 0.0, s1 = 0.0, s2 = 0.0;
      const double hi = delta * t_hi, lo = delta * t_lo;
      events.clear();
      for (int i = 0; i < n; ++i) {
        double r = resid[i], d = dmu[i];
        // Classify by the side held for t slightly past 0 so exact-edge
        // residuals land with their direction of motion.
        signed char s;
        if (r > hi || (r == hi && d <= 0.0)) {
          s = kHi;
        } else if (r < lo || (r == lo && d >= 0.0)) {
          s = kLo;
        } else {
          s = kZone;
        }
        state[static_cast<size_t>(i)] = s;
        if (s == kHi) {
          lin += t_hi * d;
        } else if (s == kLo) {
          lin += t_lo * d;
        } else {
          s1 += r * d;
          s2 += d * d;
        }
        if (d > 0.0) {  // residual r - t*d decreasing: HI -> ZONE -> LO
          if (s == kHi) events.push_back({(r - hi) / d, i, kZone});
          if (s != kLo) events.push_back({(r - lo) / d, i, kLo});
        } else if (d < 0.0) {  // increasing: LO -> ZONE -> HI
          if (s == kLo) events.push_back({(r - lo) / d, i, kZone});
          if (s != kHi) events.push_back({(r - hi) / d, i, kHi});
        }
      }
      std::sort(events.begin(), events.end());
      double t_prev = 0.0;
      for (size_t k = 0; k <= events.size(); ++k) {
        double denom = w_lik * s2 / delta + pq;
        double root = (w_lik * (lin + s1 / delta) - pb) / denom;
        double t_next = (k < events.size())
                            ? events[k].t
                            : std::numeric_limits<double>::infinity();
        if (root >= t_prev && root < t_next) return root;
        if (k == events.size()) break;
        const Event& ev = events[k];
        double r = resid[ev.i], d = dmu[ev.i];
        signed char from = state[static_cast<size_t>(ev.i)];
        if (from == kHi) {
          lin -= t_hi * d;
        } else if (from == kLo) {
          lin -= t_lo * d;
        } else {
          s1 -= r * d;
          s2 -= d * d;
        }
        if (ev.to == kHi) {
          lin += t_hi * d;
        } else if (ev.to == kLo) {
          lin += t_lo * d;
        } else {
          s1 += r * d;
          s2 += d * d;
        }
        state[static_cast<size_t>(ev.i)] = ev.to;
        t_prev = t_next;
      }
      return t_prev;  // defensive: pq > 0 forces an in-segment root
    };

    const double delta_min = 1e-8 * std::max(1.0, lambda.lambda);
    int total = 0;
    auto run_stage = [&](double delta, int budget) {
      bool clean = false;
      envelope(res.mu, delta, &psi, &hw);
      for (int it = 0; it < budget; ++it) {
        grad = w_lik * latent_adjoint(design, psi) - prior.precision_apply(res.b);
        PosteriorPrecision sys = PosteriorPrecision::build(design, prior, w_lik * hw);
        step = sys.solve(grad);
        double slope = grad.dot(step);
        double bnorm = 1.0 + res.b.lpNorm<Eigen::Infinity>();
        if (!(slope > 0.0) || step.lpNorm<Eigen::Infinity>() < 1e-12 * bnorm) {
          clean = true;
          break;
        }
        ++total;
        dmu = latent_effect(design, step);
        resid = y - res.mu;
        double pb = prior.precision_apply(res.b).dot(step);
        double pq = prior.precision_apply(step).dot(step);
        double t = exact_t(delta, pb, pq);
        if (!(t > 0.0)) {
          clean = true;
          break;
        }
        res.b += t * step;
        res.mu += t * dmu;
        double moved = t * step.lpNorm<Eigen::Infinity>();
        envelope(res.mu, delta, &psi, &hw);
        if (moved < 1e-12 * bnorm) {
          clean = true;
          break;
        }
      }
      return clean;
    };
    auto walk = [&](double from) {
      for (double d = from;; d *= 0.1) {
        bool clean = run_stage(d, cfg.max_iter);
        if (d <= delta_min) return clean;
      }
    };

    // A warm start sits near the limit of the continuation path, so walking
    // from the coarse width first would drag it away and back. Probe a fine
    // width; only a failed probe pays for the full walk.
    bool last_stage_clean;
    double d_warm = std::max(delta_min, 1e-4 * lambda.lambda);
    if (warm_start && warm_start->size() == m && run_stage(d_warm, 30)) {
      last_stage_clean = d_warm <= delta_min ? true : walk(0.1 * d_warm);
    } else {
      last_stage_clean = walk(0.5 * lambda.lambda);
    }
    res.iterations = std::max(total, 1);
    f = objective(res.b, res.mu);
    res.trace.push_back(f);
    res.objective = f;
    res.converged = last_stage_clean;
    if (!res.converged) {
      throw ModeError("find_mode: no convergence after " +
                          std::to_string(cfg.max_iter) + " final-stage iterations",
                      res.b, res.trace);
    }
    return res;
  }

  // The Fisher weight does not depend on b, so the scoring system is constant.
  PosteriorPrecision system =
      PosteriorPrecision::build(design, prior, tempering * fisher_curvature(lambda, tau));

  Eigen::VectorXd score(n), grad(m), step(m), cand(m), cand_mu(n), kinv_b(m), dmu(n);
  const double tau_hi = tau.tau / lambda.lambda;        // score below a kink
  const double tau_lo = (tau.tau - 1.0) / lambda.lambda;  // score above a kink
  for (int it = 1; it <= cfg.max_iter; ++it) {
    res.iterations = it;
    for (int i = 0; i < n; ++i) {
      score[i] = ald_score_mu(y[i], res.mu[i], lambda, tau);
    }
    kinv_b = prior.precision_apply(res.b);
    grad = tempering * latent_adjoint(design, score) - kinv_b;
    step = system.solve(grad);
    dmu = latent_effect(design, step);

    // One-sided directional slope: observations sitting exactly on their kink
    // contribute the score of the side the step moves them to.
    double lik_slope = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = score[i];
      if (y[i] == res.mu[i]) s = dmu[i] > 0.0 ? tau_lo : tau_hi;
      lik_slope += s * dmu[i];
    }
    lik_slope *= tempering;
    double pb = kinv_b.dot(step);
    double pq = prior.precision_apply(step).dot(step);
    double slope = lik_slope - pb;
    if (!(slope > 0.0)) {
      // No ascent along the scoring direction: at the mode.
      res.converged = true;
      break;
    }
    double t = 1.0;
    bool accepted = false;
    double f_new = f;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      cand = res.b + t * step;
      f_new = objective(cand, cand_mu);
      if (f_new >= f + cfg.armijo_c * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Ascent direction plus strict concavity means failure only happens at
      // floating point resolution around the optimum.
      res.converged = true;
      break;
    }
    double step_norm = (t * step).lpNorm<Eigen::Infinity>();
    double rel = std::abs(f_new - f) / (1.0 + std::abs(f_new));
    res.b.swap(cand);
    res.mu.swap(cand_mu);
    f = f_new;
    res.trace.push_back(f);
    if (rel < cfg.rel_obj_tol && step_norm < cfg.step_tol) {
      res.converged = true;
      break;
    }
  }
  res.objective = f;
  if (!res.converged) {
    throw ModeError("find_mode: no convergence after " +
                        std::to_string(cfg.max_iter) + " iterations",
                    res.b, res.trace);
  }
  return res;
}

}  // namespace lgqr
