#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <memory>
#include <variant>
#include <vector>

namespace lgqr {

// Single grouping factor. Observation i loads on latent coordinate group[i].
struct GroupedDesign {
  int levels = 0;
  std::vector<int> group;
  std::vector<int> counts() const;
};
GroupedDesign make_grouped(std::vector<int> group, int levels);

// Two crossed factors over the same observations; the latent vector is the
// concatenation (b1, b2) of length first.levels + second.levels.
struct CrossedDesign {
  GroupedDesign first;
  GroupedDesign second;
};
CrossedDesign make_crossed(std::vector<int> g1, int levels1, std::vector<int> g2,
                           int levels2);

// Gaussian process design: one latent value per observation, Matern-1.5 prior
// over the rows of coords.
struct GpDesign {
  Eigen::MatrixXd coords;  // n x d
};

using LatentDesign = std::variant<GroupedDesign, CrossedDesign, GpDesign>;

int latent_dim(const LatentDesign& d);
int design_rows(const LatentDesign& d);

struct PriorCovParams {
  std::vector<double> sigma2;  // one variance per grouped factor
  double gp_sigma2 = 1.0;
  double gp_length = 1.0;
};

double matern32(double r, double sigma2, double length);
Eigen::MatrixXd matern32_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                double sigma2, double length);

// Z b
Eigen::VectorXd latent_effect(const LatentDesign& d, const Eigen::VectorXd& b);
// Z' v
Eigen::VectorXd latent_adjoint(const LatentDesign& d, const Eigen::VectorXd& v);
// Z' diag(w) Z as a dense matrix; w has one entry per observation.
Eigen::MatrixXd ztdz(const LatentDesign& d, const Eigen::VectorXd& w);

// Prior covariance K of the latent vector. Grouped and crossed designs store
// the diagonal precision directly; GP designs hold the dense kernel matrix and
// its Cholesky factor (with escalating jitter from 1e-10*sigma2 to
// 1e-4*sigma2 if the factorization fails).
class PriorCovariance {
 public:
  static PriorCovariance build(const LatentDesign& d, const PriorCovParams& p);

  int dim() const { return dim_; }
  bool diagonal() const { return diag_.size() > 0; }
  const Eigen::VectorXd& precision_diag() const { return diag_; }
  Eigen::VectorXd precision_apply(const Eigen::VectorXd& b) const;  // K^-1 b
  double quad_form(const Eigen::VectorXd& b) const;                 // b' K^-1 b
  double log_det_precision() const { return logdet_prec_; }
  double log_density(const Eigen::VectorXd& b) const;  // N(0, K) log pdf
  double jitter() const { return jitter_; }

  const Eigen::MatrixXd& gp_cov() const;
  const Eigen::LLT<Eigen::MatrixXd>& gp_llt() const;
  std::shared_ptr<const Eigen::MatrixXd> gp_cov_ptr() const { return k_; }

 private:
  int dim_ = 0;
  Eigen::VectorXd diag_;
  std::shared_ptr<const Eigen::MatrixXd> k_;
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> llt_;
  double logdet_prec_ = 0.0;
  double jitter_ = 0.0;
};

// Posterior precision K^-1 + Z' diag(w) Z. Grouped designs stay diagonal; the
// crossed factorization is a dense Cholesky of the (m1+m2) square; for GP
// designs with scalar w = c the solve and determinant go through I + c K so
// K^-1 is never formed.
class PosteriorPrecision {
 public:
  static PosteriorPrecision build(const LatentDesign& d, const PriorCovariance& prior,
                                  double c);
  static PosteriorPrecision build(const LatentDesign& d, const PriorCovariance& prior,
                                  const Eigen::VectorXd& w);

  int dim() const { return dim_; }
  double log_det() const { return logdet_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;  // (K^-1 + W)^-1 rhs
  bool diagonal() const { return diag_.size() > 0; }
  const Eigen::VectorXd& diag() const { return diag_; }

 private:
  int dim_ = 0;
  Eigen::VectorXd diag_;
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> llt_;
  std::shared_ptr<const Eigen::MatrixXd> k_;  // GP prior covariance
  bool gp_ = false;
  double logdet_ = 0.0;
};

}  // namespace lgqr
