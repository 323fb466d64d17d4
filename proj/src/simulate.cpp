#include "lgqr/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lgqr/dist.hpp"

namespace lgqr {

double ald_scale_for_variance(double variance, QuantileLevel tau) {
  if (!(variance > 0.0)) {
    throw std::invalid_argument("ald_scale_for_variance: variance must be positive");
  }
  double t = tau.tau;
  double num = variance * t * t * (1.0 - t) * (1.0 - t);
  return std::sqrt(num / (1.0 - 2.0 * t + 2.0 * t * t));
}

namespace {
// Realized per-family scale: the AL lambda, the Gaussian sd, or the t(2)
// scale after matching the interquartile range of the Gaussian alternative
// (t(2) has infinite variance, so variance matching is meaningless).
double noise_scale_for(const NoiseSpec& spec, double signal_variance,
                       QuantileLevel tau) {
  double sigma;
  if (spec.fixed_scale > 0.0) {
    if (spec.family == NoiseFamily::ald) return spec.fixed_scale;
    sigma = spec.fixed_scale;
  } else {
    if (!(spec.snr > 0.0)) {
      throw std::invalid_argument("noise scale: snr must be positive");
    }
    double noise_var = signal_variance / spec.snr;
    if (spec.family == NoiseFamily::ald) return ald_scale_for_variance(noise_var, tau);
    sigma = std::sqrt(noise_var);
  }
  switch (spec.family) {
    case NoiseFamily::gaussian:
      return sigma;
    case NoiseFamily::student_t2:
      return sigma * normal_quantile(0.75) / student_t2_quantile(0.75);
    case NoiseFamily::het_gaussian_gp:
      return 0.0;
    default:
      return 0.0;
  }
}
}  // namespace

double sample_noise(Rng& rng, const NoiseSpec& spec, double signal_variance,
                    QuantileLevel tau) {
  double s = noise_scale_for(spec, signal_variance, tau);
  switch (spec.family) {
    case NoiseFamily::ald:
      return ald_sample(rng, 0.0, ALScale(s), tau);
    case NoiseFamily::gaussian:
      return s * (rng.normal() - normal_quantile(tau.tau));
    case NoiseFamily::student_t2:
      return s * (student_t2_quantile(rng.uniform()) - student_t2_quantile(tau.tau));
    case NoiseFamily::het_gaussian_gp:
      throw std::invalid_argument("sample_noise: heteroscedastic family is gp-only");
  }
  throw std::invalid_argument("sample_noise: unknown family");
}

SimulatedDataset gen_grouped(int m, int n_j, double sigma2_u, QuantileLevel tau,
                             const NoiseSpec& noise, std::uint64_t seed) {
  if (m < 1 || n_j < 1) throw std::invalid_argument("gen_grouped: counts must be positive");
  if (!(sigma2_u > 0.0)) {
    throw std::invalid_argument("gen_grouped: sigma2_u must be positive");
  }
  if (noise.family == NoiseFamily::het_gaussian_gp) {
    throw std::invalid_argument("gen_grouped: heteroscedastic noise is gp-only");
  }
  Rng rng(seed);
  int n = m * n_j;
  SimulatedDataset out;
  out.seed = seed;
  out.b_true.resize(m);
  double sd = std::sqrt(sigma2_u);
  for (int j = 0; j < m; ++j) out.b_true[j] = sd * rng.normal();

  std::vector<int> group(static_cast<size_t>(n));
  out.y.resize(n);
  out.q_true.resize(n);
  for (int i = 0; i < n; ++i) {
    int j = i / n_j;
    group[static_cast<size_t>(i)] = j;
    out.q_true[i] = out.b_true[j];
    out.y[i] = out.b_true[j] + sample_noise(rng, noise, sigma2_u, tau);
  }
  out.latent = make_grouped(std::move(group), m);
  out.noise_scale = noise_scale_for(noise, sigma2_u, tau);
  return out;
}

SimulatedDataset gen_crossed(int m1, int m2, int n_j, double sigma2_1, double sigma2_2,
                             QuantileLevel tau, const NoiseSpec& noise,
                             std::uint64_t seed) {
  if (m1 < 1 || m2 < 1 || n_j < 1) {
    throw std::invalid_argument("gen_crossed: counts must be positive");
  }
  if (!(sigma2_1 > 0.0) || !(sigma2_2 > 0.0)) {
    throw std::invalid_argument("gen_crossed: variances must be positive");
  }
  if (noise.family == NoiseFamily::het_gaussian_gp) {
    throw std::invalid_argument("gen_crossed: heteroscedastic noise is gp-only");
  }
  Rng rng(seed);
  int n = m1 * n_j;
  SimulatedDataset out;
  out.seed = seed;
  out.b_true.resize(m1 + m2);
  double sd1 = std::sqrt(sigma2_1), sd2 = std::sqrt(sigma2_2);
  for (int j = 0; j < m1; ++j) out.b_true[j] = sd1 * rng.normal();
  for (int k = 0; k < m2; ++k) out.b_true[m1 + k] = sd2 * rng.normal();

  std::vector<int> g1(static_cast<size_t>(n)), g2(static_cast<size_t>(n));
  out.y.resize(n);
  out.q_true.resize(n);
  // Noise is scaled against the first-factor variance only, matching the
  // single-factor generator, so the same snr gives the same noise law in both.
  double signal_var = sigma2_1;
  for (int i = 0; i < n; ++i) {
    int j = i / n_j;
    int k = (i % n_j) % m2;
    g1[static_cast<size_t>(i)] = j;
    g2[static_cast<size_t>(i)] = k;
    out.q_true[i] = out.b_true[j] + out.b_true[m1 + k];
    out.y[i] = out.q_true[i] + sample_noise(rng, noise, signal_var, tau);
  }
  out.latent = make_crossed(std::move(g1), m1, std::move(g2), m2);
  out.noise_scale = noise_scale_for(noise, signal_var, tau);
  return out;
}

SimulatedDataset gen_gp(int n, int d, double gp_sigma2, double gp_length,
                        QuantileLevel tau, const NoiseSpec& noise, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_gp: counts must be positive");
  Rng rng(seed);
  SimulatedDataset out;
  out.seed = seed;

  Eigen::MatrixXd coords(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) coords(i, j) = rng.uniform();
  }
  GpDesign design{coords};

  PriorCovParams theta;
  theta.gp_sigma2 = gp_sigma2;
  theta.gp_length = gp_length;
  PriorCovariance prior = PriorCovariance::build(design, theta);
  Eigen::MatrixXd chol_l = prior.gp_llt().matrixL();

  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  out.b_true = chol_l * z;
  out.q_true = out.b_true;

  out.y.resize(n);
  if (noise.family == NoiseFamily::het_gaussian_gp) {
    // Log standard deviation from an independent GP with the same kernel.
    Eigen::VectorXd z2(n);
    for (int i = 0; i < n; ++i) z2[i] = rng.normal();
    Eigen::VectorXd g = chol_l * z2;
    double zq = normal_quantile(tau.tau);
    for (int i = 0; i < n; ++i) {
      out.y[i] = out.b_true[i] + std::exp(g[i]) * (rng.normal() - zq);
    }
    out.noise_scale = 0.0;
  } else {
    for (int i = 0; i < n; ++i) {
      out.y[i] = out.b_true[i] + sample_noise(rng, noise, gp_sigma2, tau);
    }
    out.noise_scale = noise_scale_for(noise, gp_sigma2, tau);
  }
  out.latent = std::move(design);
  return out;
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() == 0) {
    throw std::invalid_argument("rmse: length mismatch");
  }
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double quantile_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& q_hat,
                     QuantileLevel tau) {
  if (y.size() != q_hat.size() || y.size() == 0) {
    throw std::invalid_argument("quantile_loss: length mismatch");
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += pinball_loss(y[i] - q_hat[i], tau);
  return s / static_cast<double>(y.size());
}

Split train_test_split(int n, double train_frac, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("train_test_split: need at least 2 rows");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("train_test_split: fraction must be in (0, 1)");
  }
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  auto k = static_cast<size_t>(std::lround(train_frac * n));
  k = std::min(std::max<size_t>(k, 1), static_cast<size_t>(n - 1));
  Split out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SimulatedDataset subset(const SimulatedDataset& data, const std::vector<int>& rows) {
  SimulatedDataset out;
  out.seed = data.seed;
  out.noise_scale = data.noise_scale;
  auto nr = static_cast<Eigen::Index>(rows.size());
  out.y.resize(nr);
  out.q_true.resize(nr);
  for (Eigen::Index i = 0; i < nr; ++i) {
    int r = rows[static_cast<size_t>(i)];
    out.y[i] = data.y[r];
    out.q_true[i] = data.q_true[r];
  }
  if (const auto* g = std::get_if<GroupedDesign>(&data.latent)) {
    std::vector<int> ids(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      ids[i] = g->group[static_cast<size_t>(rows[i])];
    }
    out.latent = make_grouped(std::move(ids), g->levels);
    out.b_true = data.b_true;
  } else if (const auto* c = std::get_if<CrossedDesign>(&data.latent)) {
    std::vector<int> a(rows.size()), b(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      a[i] = c->first.group[static_cast<size_t>(rows[i])];
      b[i] = c->second.group[static_cast<size_t>(rows[i])];
    }
    out.latent = make_crossed(std::move(a), c->first.levels, std::move(b),
                              c->second.levels);
    out.b_true = data.b_true;
  } else {
    const auto& gp = std::get<GpDesign>(data.latent);
    Eigen::MatrixXd coords(nr, gp.coords.cols());
    out.b_true.resize(nr);
    for (Eigen::Index i = 0; i < nr; ++i) {
      int r = rows[static_cast<size_t>(i)];
      coords.row(i) = gp.coords.row(r);
      out.b_true[i] = data.b_true[r];
    }
    out.latent = GpDesign{std::move(coords)};
  }
  return out;
}

}  // namespace lgqr
