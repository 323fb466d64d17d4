#include "lgqr/designs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lgqr/errors.hpp"

namespace lgqr {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd dense_identity(int n) {
  return Eigen::MatrixXd::Identity(n, n);
}

double llt_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  double s = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}
}  // namespace

std::vector<int> GroupedDesign::counts() const {
  std::vector<int> c(levels, 0);
  for (int g : group) ++c[g];
  return c;
}

GroupedDesign make_grouped(std::vector<int> group, int levels) {
  if (levels <= 0) throw std::invalid_argument("make_grouped: levels must be positive");
  for (int g : group) {
    if (g < 0 || g >= levels) {
      throw std::invalid_argument("make_grouped: group id " + std::to_string(g) +
                                  " outside [0," + std::to_string(levels) + ")");
    }
  }
  return GroupedDesign{levels, std::move(group)};
}

CrossedDesign make_crossed(std::vector<int> g1, int levels1, std::vector<int> g2,
                           int levels2) {
  if (g1.size() != g2.size()) {
    throw std::invalid_argument("make_crossed: factors must index the same rows");
  }
  return CrossedDesign{make_grouped(std::move(g1), levels1),
                       make_grouped(std::move(g2), levels2)};
}

int latent_dim(const LatentDesign& d) {
  if (const auto* g = std::get_if<GroupedDesign>(&d)) return g->levels;
  if (const auto* c = std::get_if<CrossedDesign>(&d)) {
    return c->first.levels + c->second.levels;
  }
  return static_cast<int>(std::get<GpDesign>(d).coords.rows());
}

int design_rows(const LatentDesign& d) {
  if (const auto* g = std::get_if<GroupedDesign>(&d)) {
    return static_cast<int>(g->group.size());
  }
  if (const auto* c = std::get_if<CrossedDesign>(&d)) {
    return static_cast<int>(c->first.group.size());
  }
  return static_cast<int>(std::get<GpDesign>(d).coords.rows());
}

double matern32(double r, double sigma2, double length) {
  double a = std::sqrt(3.0) * r / length;
  return sigma2 * (1.0 + a) * std::exp(-a);
}

Eigen::MatrixXd matern32_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                double sigma2, double length) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matern32_matrix: dimension mismatch");
  }
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double r = (a.row(i) - b.row(j)).norm();
      k(i, j) = matern32(r, sigma2, length);
    }
  }
  return k;
}

Eigen::VectorXd latent_effect(const LatentDesign& d, const Eigen::VectorXd& b) {
  int n = design_rows(d);
  Eigen::VectorXd out(n);
  if (const auto* g = std::get_if<GroupedDesign>(&d)) {
    for (int i = 0; i < n; ++i) out[i] = b[g->group[i]];
  } else if (const auto* c = std::get_if<CrossedDesign>(&d)) {
    int m1 = c->first.levels;
    for (int i = 0; i < n; ++i) {
      out[i] = b[c->first.group[i]] + b[m1 + c->second.group[i]];
    }
  } else {
    out = b;
  }
  return out;
}

Eigen::VectorXd latent_adjoint(const LatentDesign& d, const Eigen::VectorXd& v) {
  int n = design_rows(d);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(latent_dim(d));
  if (const auto* g = std::get_if<GroupedDesign>(&d)) {
    for (int i = 0; i < n; ++i) out[g->group[i]] += v[i];
  } else if (const auto* c = std::get_if<CrossedDesign>(&d)) {
    int m1 = c->first.levels;
    for (int i = 0; i < n; ++i) {
      out[c->first.group[i]] += v[i];
      out[m1 + c->second.group[i]] += v[i];
    }
  } else {
    out = v;
  }
  return out;
}

Eigen::MatrixXd ztdz(const LatentDesign& d, const Eigen::VectorXd& w) {
  int n = design_rows(d);
  if (w.size() != n) throw std::invalid_argument("ztdz: weight length mismatch");
  int m = latent_dim(d);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  if (const auto* g = std::get_if<GroupedDesign>(&d)) {
    for (int i = 0; i < n; ++i) out(g->group[i], g->group[i]) += w[i];
  } else if (const auto* c = std::get_if<CrossedDesign>(&d)) {
    int m1 = c->first.levels;
    for (int i = 0; i < n; ++i) {
      int a = c->first.group[i];
      int b = m1 + c->second.group[i];
      out(a, a) += w[i];
      out(b, b) += w[i];
      out(a, b) += w[i];
      out(b, a) += w[i];
    }
  } else {
    for (int i = 0; i < n; ++i) out(i, i) = w[i];
  }
  return out;
}

PriorCovariance PriorCovariance::build(const LatentDesign& d, const PriorCovParams& p) {
  PriorCovariance out;
  out.dim_ = latent_dim(d);
  if (const auto* g = std::get_if<GroupedDesign>(&d)) {
    if (p.sigma2.empty() || !(p.sigma2[0] > 0.0)) {
      throw std::invalid_argument("PriorCovariance: grouped design needs sigma2 > 0");
    }
    out.diag_ = Eigen::VectorXd::Constant(g->levels, 1.0 / p.sigma2[0]);
  } else if (std::get_if<CrossedDesign>(&d)) {
    const auto& c = std::get<CrossedDesign>(d);
    if (p.sigma2.size() < 2 || !(p.sigma2[0] > 0.0) || !(p.sigma2[1] > 0.0)) {
      throw std::invalid_argument(
          "PriorCovariance: crossed design needs two positive variances");
    }
    out.diag_.resize(out.dim_);
    out.diag_.head(c.first.levels).setConstant(1.0 / p.sigma2[0]);
    out.diag_.tail(c.second.levels).setConstant(1.0 / p.sigma2[1]);
  } else {
    const auto& gp = std::get<GpDesign>(d);
    if (!(p.gp_sigma2 > 0.0) || !(p.gp_length > 0.0)) {
      throw std::invalid_argument("PriorCovariance: gp design needs positive kernel params");
    }
    Eigen::MatrixXd k = matern32_matrix(gp.coords, gp.coords, p.gp_sigma2, p.gp_length);
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>();
    double jit = 0.0;
    llt->compute(k);
    while (llt->info() != Eigen::Success) {
      jit = (jit == 0.0) ? 1e-10 * p.gp_sigma2 : 10.0 * jit;
      if (jit > 1e-4 * p.gp_sigma2) {
        throw NumericalError("PriorCovariance: kernel matrix of dim " +
                             std::to_string(out.dim_) +
                             " not positive definite even with jitter " +
                             std::to_string(jit / 10.0));
      }
      llt->compute(k + jit * dense_identity(out.dim_));
    }
    if (jit > 0.0) k += jit * dense_identity(out.dim_);
    out.k_ = std::make_shared<const Eigen::MatrixXd>(std::move(k));
    out.llt_ = std::move(llt);
    out.jitter_ = jit;
    out.logdet_prec_ = -llt_log_det(*out.llt_);
    return out;
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < out.diag_.size(); ++i) s += std::log(out.diag_[i]);
  out.logdet_prec_ = s;
  return out;
}

Eigen::VectorXd PriorCovariance::precision_apply(const Eigen::VectorXd& b) const {
  if (diagonal()) return diag_.cwiseProduct(b);
  return llt_->solve(b);
}

double PriorCovariance::quad_form(const Eigen::VectorXd& b) const {
  return b.dot(precision_apply(b));
}

double PriorCovariance::log_density(const Eigen::VectorXd& b) const {
  return -0.5 * quad_form(b) + 0.5 * logdet_prec_ - 0.5 * dim_ * kLog2Pi;
}

const Eigen::MatrixXd& PriorCovariance::gp_cov() const {
  if (!k_) throw std::logic_error("PriorCovariance: no GP covariance stored");
  return *k_;
}

const Eigen::LLT<Eigen::MatrixXd>& PriorCovariance::gp_llt() const {
  if (!llt_) throw std::logic_error("PriorCovariance: no GP factorization stored");
  return *llt_;
}

PosteriorPrecision PosteriorPrecision::build(const LatentDesign& d,
                                             const PriorCovariance& prior, double c) {
  if (!(c >= 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("PosteriorPrecision: curvature must be finite and >= 0");
  }
  if (std::get_if<GpDesign>(&d)) {
    PosteriorPrecision out;
    out.dim_ = prior.dim();
    out.gp_ = true;
    out.k_ = prior.gp_cov_ptr();
    Eigen::MatrixXd a = c * prior.gp_cov();
    a.diagonal().array() += 1.0;
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(a);
    if (llt->info() != Eigen::Success) {
      throw NumericalError("PosteriorPrecision: I + cK factorization failed, c = " +
                           std::to_string(c));
    }
    out.logdet_ = llt_log_det(*llt) + prior.log_det_precision();
    out.llt_ = std::move(llt);
    return out;
  }
  return build(d, prior, Eigen::VectorXd::Constant(design_rows(d), c));
}

PosteriorPrecision PosteriorPrecision::build(const LatentDesign& d,
                                             const PriorCovariance& prior,
                                             const Eigen::VectorXd& w) {
  PosteriorPrecision out;
  out.dim_ = prior.dim();
  if (std::get_if<GroupedDesign>(&d)) {
    const auto& g = std::get<GroupedDesign>(d);
    out.diag_ = prior.precision_diag();
    for (size_t i = 0; i < g.group.size(); ++i) {
      out.diag_[g.group[i]] += w[static_cast<Eigen::Index>(i)];
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < out.diag_.size(); ++i) s += std::log(out.diag_[i]);
    out.logdet_ = s;
    return out;
  }
  Eigen::MatrixXd a = ztdz(d, w);
  if (prior.diagonal()) {
    a.diagonal() += prior.precision_diag();
  } else {
    // Test-only path for GP designs with observation-specific weights.
    a += prior.gp_llt().solve(dense_identity(out.dim_));
    a = 0.5 * (a + a.transpose()).eval();
  }
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(a);
  if (llt->info() != Eigen::Success) {
    throw NumericalError("PosteriorPrecision: dense factorization failed, dim = " +
                         std::to_string(out.dim_));
  }
  out.logdet_ = llt_log_det(*llt);
  out.llt_ = std::move(llt);
  return out;
}

Eigen::VectorXd PosteriorPrecision::solve(const Eigen::VectorXd& rhs) const {
  if (diagonal()) return rhs.cwiseQuotient(diag_);
  if (gp_) return llt_->solve(*k_ * rhs);
  return llt_->solve(rhs);
}

}  // namespace lgqr
