#include "lgqr/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "lgqr/errors.hpp"
#include "lgqr/quadrature.hpp"

namespace lgqr {

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = hw > 0 ? hw : 1;
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

const char* method_name(CurvatureMethod m) {
  return m == CurvatureMethod::tkc ? "tkc" : "fisher";
}

const char* design_name(DesignKind d) {
  switch (d) {
    case DesignKind::grouped:
      return "grouped";
    case DesignKind::crossed:
      return "crossed";
    case DesignKind::gp:
      return "gp";
  }
  return "?";
}

const char* noise_name(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::ald:
      return "ald";
    case NoiseFamily::gaussian:
      return "gaussian";
    case NoiseFamily::student_t2:
      return "student_t2";
    case NoiseFamily::het_gaussian_gp:
      return "het_gaussian_gp";
  }
  return "?";
}

SimulatedDataset generate(const ExperimentConfig& cfg, std::uint64_t seed) {
  QuantileLevel tau(cfg.tau);
  switch (cfg.design) {
    case DesignKind::grouped:
      return gen_grouped(cfg.m, cfg.n_j, cfg.sigma2_u, tau, cfg.noise, seed);
    case DesignKind::crossed:
      return gen_crossed(cfg.m, cfg.m2, cfg.n_j, cfg.sigma2_u, cfg.sigma2_2, tau,
                         cfg.noise, seed);
    case DesignKind::gp:
      return gen_gp(cfg.n, cfg.dim, cfg.gp_sigma2, cfg.gp_length, tau, cfg.noise,
                    seed);
  }
  throw std::invalid_argument("run_experiment: unknown design");
}

double true_variance_component(const ExperimentConfig& cfg) {
  return cfg.design == DesignKind::gp ? cfg.gp_sigma2 : cfg.sigma2_u;
}

double estimated_variance_component(const ExperimentConfig& cfg, const FitResult& fr) {
  return cfg.design == DesignKind::gp ? fr.theta.gp_sigma2 : fr.theta.sigma2[0];
}

PredictRequest request_for(const SimulatedDataset& test) {
  PredictRequest req;
  if (const auto* g = std::get_if<GroupedDesign>(&test.latent)) {
    req.group = g->group;
  } else if (const auto* c = std::get_if<CrossedDesign>(&test.latent)) {
    req.group = c->first.group;
    req.group2 = c->second.group;
  } else {
    req.coords = std::get<GpDesign>(test.latent).coords;
  }
  return req;
}

void aggregate(const ExperimentConfig& cfg, CurvatureMethod method,
               const std::vector<RepOutcome>& outs, std::vector<MetricRow>& rows) {
  auto push = [&](const std::string& metric, auto get) {
    std::vector<double> vals;
    double runtime = 0.0;
    for (const auto& o : outs) {
      if (o.failed) continue;
      vals.push_back(get(o));
      runtime += o.runtime_s;
    }
    MetricRow row;
    row.design = design_name(cfg.design);
    row.noise = noise_name(cfg.noise.family);
    row.m = cfg.design == DesignKind::gp ? cfg.n : cfg.m;
    row.n_j = cfg.design == DesignKind::gp ? cfg.dim : cfg.n_j;
    row.method = method_name(method);
    row.metric = metric;
    if (vals.empty()) {
      row.mean = std::numeric_limits<double>::quiet_NaN();
      row.se = row.mean;
      row.runtime_s = row.mean;
    } else {
      auto r = static_cast<double>(vals.size());
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= r;
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      row.mean = mean;
      row.se = vals.size() > 1 ? std::sqrt(ss / (r - 1.0) / r) : 0.0;
      row.runtime_s = runtime / r;
    }
    rows.push_back(std::move(row));
  };
  push("rmse", [](const RepOutcome& o) { return o.rmse; });
  push("quantile_loss", [](const RepOutcome& o) { return o.qloss; });
  push("sigma2_sq_err", [](const RepOutcome& o) { return o.sigma2_sq_err; });
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.replications < 1) {
    throw std::invalid_argument("run_experiment: need at least one replication");
  }
  if (cfg.methods.empty()) {
    throw std::invalid_argument("run_experiment: no curvature methods requested");
  }
  ExperimentReport report;
  report.outcomes.assign(cfg.methods.size(),
                         std::vector<RepOutcome>(static_cast<size_t>(cfg.replications)));

  parallel_for(cfg.replications, cfg.threads, [&](int r) {
    auto rep = static_cast<std::uint64_t>(r);
    SimulatedDataset data = generate(cfg, mix_seed(cfg.seed, rep));
    Split split = train_test_split(static_cast<int>(data.y.size()), cfg.train_frac,
                                   mix_seed(cfg.seed, 1000003 + rep));
    SimulatedDataset train = subset(data, split.train);
    SimulatedDataset test = subset(data, split.test);
    PredictRequest req = request_for(test);

    for (size_t k = 0; k < cfg.methods.size(); ++k) {
      RepOutcome& out = report.outcomes[k][static_cast<size_t>(r)];
      try {
        auto t0 = std::chrono::steady_clock::now();
        QuantileModel model =
            make_model(QuantileLevel(cfg.tau), train.latent, {}, cfg.methods[k]);
        if (cfg.min_drop > 0.0) model.approx.tkc.min_drop = cfg.min_drop;
        FitConfig fit_cfg;
        fit_cfg.seed = mix_seed(cfg.seed, 2000003 + rep);
        FitResult fr = fit(model, train.y, fit_cfg);
        Prediction pred = predict(summarize(model, fr), req);
        auto t1 = std::chrono::steady_clock::now();
        out.rmse = rmse(pred.quantile, test.q_true);
        out.qloss = quantile_loss(test.y, pred.quantile, QuantileLevel(cfg.tau));
        double dv = estimated_variance_component(cfg, fr) - true_variance_component(cfg);
        out.sigma2_sq_err = dv * dv;
        out.runtime_s = std::chrono::duration<double>(t1 - t0).count();
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
    }
  });

  for (size_t k = 0; k < cfg.methods.size(); ++k) {
    aggregate(cfg, cfg.methods[k], report.outcomes[k], report.rows);
  }
  return report;
}

std::vector<MllRow> run_mll_check(const MllConfig& cfg) {
  if (cfg.datasets < 1) throw std::invalid_argument("run_mll_check: need datasets");
  struct Task {
    int n_j;
    int dataset;
  };
  std::vector<Task> tasks;
  for (int n_j : cfg.group_sizes) {
    for (int k = 0; k < cfg.datasets; ++k) tasks.push_back({n_j, k});
  }
  std::vector<std::vector<MllRow>> rows(tasks.size());

  parallel_for(static_cast<int>(tasks.size()), cfg.threads, [&](int t) {
    const Task& task = tasks[static_cast<size_t>(t)];
    std::uint64_t seed = mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(task.n_j)),
                                  static_cast<std::uint64_t>(task.dataset));
    SimulatedDataset data = gen_grouped(cfg.m, task.n_j, cfg.sigma2_u,
                                        QuantileLevel(cfg.tau), cfg.noise, seed);
    const auto& design = std::get<GroupedDesign>(data.latent);

    std::vector<std::vector<double>> group_y(static_cast<size_t>(design.levels));
    for (int i = 0; i < static_cast<int>(design.group.size()); ++i) {
      group_y[static_cast<size_t>(design.group[static_cast<size_t>(i)])].push_back(
          data.y[i]);
    }

    for (CurvatureMethod method : cfg.methods) {
      MllRow base;
      base.n_j = task.n_j;
      base.method = method_name(method);
      base.dataset = task.dataset;
      try {
        QuantileModel model =
            make_model(QuantileLevel(cfg.tau), data.latent, {}, method);
        FitConfig fit_cfg;
        fit_cfg.seed = mix_seed(seed, 7);
        FitResult fr = fit(model, data.y, fit_cfg);
        double sigma2 = fr.theta.sigma2[0];
        ALScale lambda(fr.lambda);
        QuantileLevel tau(cfg.tau);
        // Per-group Laplace value; summing these reproduces fr.log_marginal
        // because the grouped posterior precision is diagonal.
        for (int j = 0; j < design.levels; ++j) {
          const auto& yj = group_y[static_cast<size_t>(j)];
          double b_hat = fr.approx.mode.b[j];
          double ll = 0.0;
          for (double yv : yj) ll += ald_log_pdf(yv, b_hat, lambda, tau);
          double nj = static_cast<double>(yj.size());
          MllRow row = base;
          row.group = j;
          row.log_marginal = ll - b_hat * b_hat / (2.0 * sigma2) -
                             0.5 * std::log1p(sigma2 * nj * fr.approx.c_eff);
          Eigen::VectorXd rv =
              Eigen::Map<const Eigen::VectorXd>(yj.data(), static_cast<int>(yj.size()));
          row.oracle = agh_group(rv, sigma2, lambda, tau, cfg.nodes);
          row.rel_error = std::abs(std::expm1(row.log_marginal - row.oracle));
          rows[static_cast<size_t>(t)].push_back(std::move(row));
        }
      } catch (const std::exception& e) {
        base.failed = true;
        base.error = e.what();
        rows[static_cast<size_t>(t)].push_back(std::move(base));
      }
    }
  });

  std::vector<MllRow> out;
  for (auto& group : rows) {
    for (auto& row : group) out.push_back(std::move(row));
  }
  return out;
}

std::vector<CoverageRow> run_coverage(const CoverageConfig& cfg) {
  if (cfg.replications < 1) {
    throw std::invalid_argument("run_coverage: need at least one replication");
  }
  std::vector<CoverageRow> rows(static_cast<size_t>(cfg.replications));

  parallel_for(cfg.replications, cfg.threads, [&](int r) {
    CoverageRow& row = rows[static_cast<size_t>(r)];
    row.rep = r;
    auto rep = static_cast<std::uint64_t>(r);
    row.data_seed = mix_seed(cfg.seed, rep);
    try {
      SimulatedDataset data = gen_grouped(cfg.m, cfg.n_j, cfg.sigma2_u,
                                          QuantileLevel(cfg.tau), cfg.noise,
                                          row.data_seed);
      const auto& design = std::get<GroupedDesign>(data.latent);
      QuantileModel model = make_model(QuantileLevel(cfg.tau), data.latent, {},
                                       CurvatureMethod::tkc);
      FitConfig fit_cfg;
      fit_cfg.seed = mix_seed(cfg.seed, 2000003 + rep);
      FitResult fr = fit(model, data.y, fit_cfg);
      QuantileLevel tau(cfg.tau);
      ALScale lambda(fr.lambda);

      std::vector<int> counts = design.counts();
      const Eigen::VectorXd& b_hat = fr.approx.mode.b;
      std::vector<std::vector<double>> resid(static_cast<size_t>(cfg.m));
      for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        int j = design.group[static_cast<size_t>(i)];
        resid[static_cast<size_t>(j)].push_back(data.y[i] - b_hat[j]);
      }

      std::vector<Interval> sandwich(static_cast<size_t>(cfg.m));
      std::vector<Interval> naive(static_cast<size_t>(cfg.m));
      double sw = 0.0, nw = 0.0;
      for (int j = 0; j < cfg.m; ++j) {
        auto& rj = resid[static_cast<size_t>(j)];
        Eigen::Map<Eigen::VectorXd> rv(rj.data(), static_cast<Eigen::Index>(rj.size()));
        double c_j;
        try {
          Eigen::VectorXd zero = Eigen::VectorXd::Zero(rv.size());
          c_j = estimate_curvature(CurvatureMethod::tkc, rv, zero, lambda, tau,
                                   model.approx.tkc)
                    .c;
        } catch (const DegenerateCurvature&) {
          c_j = fr.approx.curvature.c;
        }
        double var_s =
            sandwich_variance(tau, counts[static_cast<size_t>(j)], c_j, cfg.scale,
                              fr.lambda);
        double var_n = 1.0 / fr.approx.posterior.diag()[j];
        sandwich[static_cast<size_t>(j)] = wald_interval(b_hat[j], var_s, cfg.level);
        naive[static_cast<size_t>(j)] = wald_interval(b_hat[j], var_n, cfg.level);
        sw += sandwich[static_cast<size_t>(j)].hi - sandwich[static_cast<size_t>(j)].lo;
        nw += naive[static_cast<size_t>(j)].hi - naive[static_cast<size_t>(j)].lo;
      }
      row.sandwich_coverage = empirical_coverage(data.b_true, sandwich);
      row.naive_coverage = empirical_coverage(data.b_true, naive);
      row.sandwich_mean_width = sw / cfg.m;
      row.naive_mean_width = nw / cfg.m;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  });
  return rows;
}

}  // namespace lgqr
