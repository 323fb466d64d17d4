#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "lgqr/ald.hpp"
#include "lgqr/designs.hpp"
#include "lgqr/rng.hpp"

namespace lgqr {

enum class NoiseFamily { ald, gaussian, student_t2, het_gaussian_gp };

// All families are centered so the tau-quantile of the noise is exactly zero;
// the true conditional quantile is then the latent signal itself. snr sets the
// noise scale against the latent signal variance, except for the
// heteroscedastic family where the per-point sd is exp of an independent GP
// draw and snr plays no role. A positive fixed_scale overrides snr entirely:
// it is the AL scale lambda for the ald family and the pre-centering sd for
// the gaussian and student_t2 families.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::ald;
  double snr = 5.0;
  double fixed_scale = 0.0;
};

struct SimulatedDataset {
  Eigen::VectorXd y;
  LatentDesign latent;
  Eigen::VectorXd b_true;  // level-indexed for grouped/crossed, row-indexed for gp
  Eigen::VectorXd q_true;  // per-row true tau-quantile
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

// AL scale whose variance matches the target: Var = lambda^2 (1 - 2tau +
// 2tau^2) / (tau^2 (1-tau)^2).
double ald_scale_for_variance(double variance, QuantileLevel tau);

// One centered noise draw. The heteroscedastic family is per-point and is
// rejected here; gen_gp handles it inline.
double sample_noise(Rng& rng, const NoiseSpec& spec, double signal_variance,
                    QuantileLevel tau);

// Rows are laid out level-major: group j occupies rows [j*n_j, (j+1)*n_j).
SimulatedDataset gen_grouped(int m, int n_j, double sigma2_u, QuantileLevel tau,
                             const NoiseSpec& noise, std::uint64_t seed);

// Second-factor ids cycle 0,1,...,m2-1,0,... within each first-factor level,
// so the design is completely crossed whenever n_j >= m2.
SimulatedDataset gen_crossed(int m1, int m2, int n_j, double sigma2_1, double sigma2_2,
                             QuantileLevel tau, const NoiseSpec& noise,
                             std::uint64_t seed);

// Coordinates uniform on [0,1]^d; latent drawn from a Matern-1.5 GP by
// factor sampling.
SimulatedDataset gen_gp(int n, int d, double gp_sigma2, double gp_length,
                        QuantileLevel tau, const NoiseSpec& noise, std::uint64_t seed);

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double quantile_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat,
                     QuantileLevel tau);

// Membership is a shuffle of 0..n-1; both halves are returned sorted so
// downstream row order does not depend on shuffle internals.
struct Split {
  std::vector<int> train;
  std::vector<int> test;
};
Split train_test_split(int n, double train_frac, std::uint64_t seed);

// Row subset: grouped/crossed keep the full level set (b_true untouched), gp
// keeps only the selected coordinates and latent values.
SimulatedDataset subset(const SimulatedDataset& data, const std::vector<int>& rows);

}  // namespace lgqr
