#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lgqr/errors.hpp"
#include "lgqr/experiment.hpp"
#include "lgqr/io.hpp"
#include "lgqr/laplace.hpp"
#include "lgqr/simulate.hpp"

using nlohmann::json;

namespace {

using namespace lgqr;

struct CommonFlags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> curvature;
  std::optional<double> tau;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_data) {
  cmd->add_option("--config", f.config, "Configuration JSON path")->required();
  if (with_data) cmd->add_option("--data", f.data, "Input data CSV path");
  cmd->add_option("--out", f.out, "Output path (or path prefix)")->required();
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_option("--threads", f.threads, "Worker thread cap (0 = hardware)");
  cmd->add_option("--curvature", f.curvature, "Override curvature method")
      ->check(CLI::IsMember({"fisher", "tkc"}));
  cmd->add_option("--tau", f.tau, "Override the quantile level");
  cmd->add_flag("--no-timestamp", f.no_timestamp, "Omit timestamps from outputs");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_required(const json& obj, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError("config key '" + key + "' is required");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

NoiseFamily parse_noise(const std::string& name) {
  if (name == "ald") return NoiseFamily::ald;
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "student_t2") return NoiseFamily::student_t2;
  if (name == "het_gaussian_gp") return NoiseFamily::het_gaussian_gp;
  throw ConfigError("unknown noise family: " + name);
}

CurvatureMethod parse_method(const std::string& name) {
  if (name == "fisher") return CurvatureMethod::fisher;
  if (name == "tkc") return CurvatureMethod::tkc;
  throw ConfigError("unknown curvature method: " + name);
}

DesignKind parse_design(const std::string& name) {
  if (name == "grouped") return DesignKind::grouped;
  if (name == "crossed") return DesignKind::crossed;
  if (name == "gp") return DesignKind::gp;
  throw ConfigError("unknown design: " + name);
}

double checked_tau(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ConfigError("tau must be in (0, 1), got " + std::to_string(t));
  }
  return t;
}

std::string timestamp_now() {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
  return std::to_string(secs.count());
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommonFlags& f) {
  json cfg = load_config(f.config);
  reject_unknown(cfg,
                 {"design", "noise", "snr", "noise_scale", "tau", "m", "n_j", "m2", "sigma2_u",
                  "sigma2_2", "n", "dim", "gp_sigma2", "gp_length", "seed"},
                 "simulate config");
  DesignKind design = parse_design(get_required<std::string>(cfg, "design"));
  NoiseSpec noise;
  noise.family = parse_noise(get_or<std::string>(cfg, "noise", "ald"));
  noise.snr = get_or<double>(cfg, "snr", 5.0);
  noise.fixed_scale = get_or<double>(cfg, "noise_scale", 0.0);
  double tau = checked_tau(f.tau.value_or(get_or<double>(cfg, "tau", 0.8)));
  std::uint64_t seed = f.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 1));

  SimulatedDataset data;
  json meta;
  meta["schema_version"] = 1;
  meta["command"] = "simulate";
  meta["tau"] = tau;
  meta["seed"] = seed;
  meta["noise"] = get_or<std::string>(cfg, "noise", "ald");
  meta["snr"] = noise.snr;

  switch (design) {
    case DesignKind::grouped: {
      int m = get_required<int>(cfg, "m");
      int n_j = get_required<int>(cfg, "n_j");
      double s2 = get_or<double>(cfg, "sigma2_u", 1.0);
      data = gen_grouped(m, n_j, s2, QuantileLevel(tau), noise, seed);
      meta["design"] = "grouped";
      meta["m"] = m;
      meta["n_j"] = n_j;
      meta["sigma2_u"] = s2;
      break;
    }
    case DesignKind::crossed: {
      int m = get_required<int>(cfg, "m");
      int m2 = get_required<int>(cfg, "m2");
      int n_j = get_required<int>(cfg, "n_j");
      double s1 = get_or<double>(cfg, "sigma2_u", 1.0);
      double s2 = get_or<double>(cfg, "sigma2_2", 2.0);
      data = gen_crossed(m, m2, n_j, s1, s2, QuantileLevel(tau), noise, seed);
      meta["design"] = "crossed";
      meta["m"] = m;
      meta["m2"] = m2;
      meta["n_j"] = n_j;
      meta["sigma2_u"] = s1;
      meta["sigma2_2"] = s2;
      break;
    }
    case DesignKind::gp: {
      int n = get_required<int>(cfg, "n");
      int dim = get_required<int>(cfg, "dim");
      double s2 = get_or<double>(cfg, "gp_sigma2", 1.0);
      double len = get_or<double>(cfg, "gp_length", 0.25);
      data = gen_gp(n, dim, s2, len, QuantileLevel(tau), noise, seed);
      meta["design"] = "gp";
      meta["n"] = n;
      meta["dim"] = dim;
      meta["gp_sigma2"] = s2;
      meta["gp_length"] = len;
      break;
    }
  }
  meta["noise_scale"] = data.noise_scale;
  meta["b_true"] = std::vector<double>(data.b_true.begin(), data.b_true.end());
  if (!f.no_timestamp) meta["timestamp"] = timestamp_now();

  Table t;
  t.columns.push_back("y");
  t.data.push_back({data.y.begin(), data.y.end()});
  if (const auto* g = std::get_if<GroupedDesign>(&data.latent)) {
    t.columns.push_back("group1");
    t.data.push_back({g->group.begin(), g->group.end()});
  } else if (const auto* c = std::get_if<CrossedDesign>(&data.latent)) {
    t.columns.push_back("group1");
    t.data.push_back({c->first.group.begin(), c->first.group.end()});
    t.columns.push_back("group2");
    t.data.push_back({c->second.group.begin(), c->second.group.end()});
  } else {
    const auto& coords = std::get<GpDesign>(data.latent).coords;
    for (Eigen::Index j = 0; j < coords.cols(); ++j) {
      t.columns.push_back("coord" + std::to_string(j + 1));
      std::vector<double> col(static_cast<size_t>(coords.rows()));
      for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        col[static_cast<size_t>(i)] = coords(i, j);
      }
      t.data.push_back(std::move(col));
    }
  }
  write_csv(f.out + ".csv", t);

  Table truth;
  truth.columns.push_back("q_true");
  truth.data.push_back({data.q_true.begin(), data.q_true.end()});
  write_csv(f.out + "_truth.csv", truth);
  write_json(f.out + "_meta.json", meta);
  return 0;
}

// --------------------------------------------------------------- fit helpers

struct LoadedData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  LatentDesign latent;
};

std::vector<int> int_column(const Table& t, const std::string& name) {
  const auto& col = t.column(name);
  std::vector<int> out(col.size());
  for (size_t i = 0; i < col.size(); ++i) {
    double v = col[i];
    if (v != std::floor(v) || std::abs(v) > 1e9) {
      throw DataError("column '" + name + "' must hold integer ids");
    }
    out[i] = static_cast<int>(v);
  }
  return out;
}

LoadedData load_data(const std::string& path, const json& design_cfg) {
  reject_unknown(design_cfg, {"kind", "levels", "levels1", "levels2", "dim"},
                 "design config");
  Table t = read_csv(path);
  if (t.rows() == 0) throw DataError(path + ": no data rows");
  LoadedData out;
  const auto& ycol = t.column("y");
  out.y = Eigen::Map<const Eigen::VectorXd>(ycol.data(),
                                            static_cast<Eigen::Index>(ycol.size()));

  std::string kind = get_required<std::string>(design_cfg, "kind");
  if (kind == "grouped") {
    auto ids = int_column(t, "group1");
    int levels = get_or<int>(design_cfg, "levels", 0);
    if (levels <= 0) {
      for (int id : ids) levels = std::max(levels, id + 1);
    }
    out.latent = make_grouped(std::move(ids), levels);
  } else if (kind == "crossed") {
    auto a = int_column(t, "group1");
    auto b = int_column(t, "group2");
    int l1 = get_or<int>(design_cfg, "levels1", 0);
    int l2 = get_or<int>(design_cfg, "levels2", 0);
    if (l1 <= 0) {
      for (int id : a) l1 = std::max(l1, id + 1);
    }
    if (l2 <= 0) {
      for (int id : b) l2 = std::max(l2, id + 1);
    }
    out.latent = make_crossed(std::move(a), l1, std::move(b), l2);
  } else if (kind == "gp") {
    int dim = get_required<int>(design_cfg, "dim");
    Eigen::MatrixXd coords(static_cast<Eigen::Index>(t.rows()), dim);
    for (int j = 0; j < dim; ++j) {
      const auto& col = t.column("coord" + std::to_string(j + 1));
      for (size_t i = 0; i < col.size(); ++i) {
        coords(static_cast<Eigen::Index>(i), j) = col[i];
      }
    }
    out.latent = GpDesign{std::move(coords)};
  } else {
    throw ConfigError("unknown design kind: " + kind);
  }

  std::vector<const std::vector<double>*> xcols;
  for (int j = 1; t.has_column("x" + std::to_string(j)); ++j) {
    xcols.push_back(&t.column("x" + std::to_string(j)));
  }
  out.x.resize(static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(xcols.size()));
  for (size_t j = 0; j < xcols.size(); ++j) {
    for (size_t i = 0; i < t.rows(); ++i) {
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*xcols[j])[i];
    }
  }
  return out;
}

// Enough of the training design is stored for predict to rebuild the
// posterior precision: per-level observation counts for grouped designs, the
// full id arrays for crossed ones (the factor co-occurrence matters there).
json design_to_json(const LatentDesign& latent) {
  json d;
  if (const auto* g = std::get_if<GroupedDesign>(&latent)) {
    d["kind"] = "grouped";
    d["levels"] = g->levels;
    d["counts"] = g->counts();
  } else if (const auto* c = std::get_if<CrossedDesign>(&latent)) {
    d["kind"] = "crossed";
    d["levels1"] = c->first.levels;
    d["levels2"] = c->second.levels;
    d["group1"] = c->first.group;
    d["group2"] = c->second.group;
  } else {
    const auto& coords = std::get<GpDesign>(latent).coords;
    d["kind"] = "gp";
    d["dim"] = coords.cols();
    std::vector<std::vector<double>> rows(static_cast<size_t>(coords.rows()));
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      rows[static_cast<size_t>(i)].assign(coords.row(i).begin(), coords.row(i).end());
    }
    d["coords"] = rows;
  }
  return d;
}

int cmd_fit(const CommonFlags& f) {
  json cfg = load_config(f.config);
  reject_unknown(cfg, {"design", "tau", "curvature", "tkc", "optimizer", "tempering"},
                 "fit config");
  if (f.data.empty()) throw ConfigError("fit: --data is required");
  double tau = checked_tau(f.tau.value_or(get_or<double>(cfg, "tau", 0.8)));
  CurvatureMethod method =
      parse_method(f.curvature.value_or(get_or<std::string>(cfg, "curvature", "tkc")));

  if (!cfg.contains("design")) throw ConfigError("fit config: 'design' is required");
  LoadedData data = load_data(f.data, cfg.at("design"));
  QuantileModel model = make_model(QuantileLevel(tau), data.latent, data.x, method);
  model.approx.tempering = get_or<double>(cfg, "tempering", 1.0);
  if (cfg.contains("tkc")) {
    const json& tk = cfg.at("tkc");
    reject_unknown(tk, {"min_drop", "grid_lo", "grid_hi"}, "tkc config");
    model.approx.tkc.min_drop = get_or<double>(tk, "min_drop", model.approx.tkc.min_drop);
    model.approx.tkc.grid_lo = get_or<int>(tk, "grid_lo", model.approx.tkc.grid_lo);
    model.approx.tkc.grid_hi = get_or<int>(tk, "grid_hi", model.approx.tkc.grid_hi);
  }
  FitConfig fit_cfg;
  if (cfg.contains("optimizer")) {
    const json& op = cfg.at("optimizer");
    reject_unknown(op, {"max_iter", "rel_tol", "restarts", "jitter_sd", "fd_step", "seed"},
                   "optimizer config");
    fit_cfg.max_iter = get_or<int>(op, "max_iter", fit_cfg.max_iter);
    fit_cfg.rel_tol = get_or<double>(op, "rel_tol", fit_cfg.rel_tol);
    fit_cfg.restarts = get_or<int>(op, "restarts", fit_cfg.restarts);
    fit_cfg.jitter_sd = get_or<double>(op, "jitter_sd", fit_cfg.jitter_sd);
    fit_cfg.fd_step = get_or<double>(op, "fd_step", fit_cfg.fd_step);
    fit_cfg.seed = get_or<std::uint64_t>(op, "seed", fit_cfg.seed);
  }
  if (f.seed) fit_cfg.seed = *f.seed;

  auto t0 = std::chrono::steady_clock::now();
  FitResult fr = fit(model, data.y, fit_cfg);
  auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json doc;
  doc["schema_version"] = 1;
  doc["command"] = "fit";
  doc["tau"] = tau;
  doc["design"] = design_to_json(data.latent);
  if (std::holds_alternative<GpDesign>(data.latent)) {
    doc["theta"] = {{"gp_sigma2", fr.theta.gp_sigma2},
                    {"gp_length", fr.theta.gp_length}};
  } else {
    doc["theta"] = {{"sigma2", fr.theta.sigma2}};
  }
  doc["beta"] = std::vector<double>(fr.beta.begin(), fr.beta.end());
  doc["lambda"] = fr.lambda;
  doc["log_marginal"] = fr.log_marginal;
  doc["curvature"] = {
      {"method", fr.approx.curvature.method == CurvatureMethod::tkc ? "tkc" : "fisher"},
      {"c", fr.approx.curvature.c},
      {"delta", fr.approx.curvature.delta},
      {"r_squared", fr.approx.curvature.r_squared},
      {"below_threshold", fr.approx.curvature.below_threshold},
      {"fallback", fr.approx.curvature_fallback}};
  doc["c_eff"] = fr.approx.c_eff;
  doc["b_hat"] = std::vector<double>(fr.approx.mode.b.begin(), fr.approx.mode.b.end());
  doc["optimizer"] = {{"trace", fr.trace},
                      {"evaluations", fr.evaluations},
                      {"hit_max_iter", fr.warnings.optimizer_hit_max_iter}};
  doc["warnings"] = {{"curvature_fallback", fr.warnings.curvature_fallback},
                     {"bandwidth_below_threshold", fr.warnings.bandwidth_below_threshold},
                     {"optimizer_hit_max_iter", fr.warnings.optimizer_hit_max_iter}};
  doc["wall_s"] = wall;
  if (!f.no_timestamp) doc["timestamp"] = timestamp_now();
  write_json(f.out, doc);
  return 0;
}

// ----------------------------------------------------------------- predict

PosteriorSummary summary_from_json(const json& doc) {
  if (get_or<int>(doc, "schema_version", 0) != 1) {
    throw ConfigError("predict: unsupported fit schema_version");
  }
  PosteriorSummary s;
  const json& d = doc.at("design");
  std::string kind = get_required<std::string>(d, "kind");
  auto b = get_required<std::vector<double>>(doc, "b_hat");
  s.b_hat = Eigen::Map<const Eigen::VectorXd>(b.data(),
                                              static_cast<Eigen::Index>(b.size()));
  if (kind == "grouped") {
    int levels = get_required<int>(d, "levels");
    auto counts = get_required<std::vector<int>>(d, "counts");
    if (static_cast<int>(counts.size()) != levels) {
      throw ConfigError("predict: counts length does not match levels");
    }
    std::vector<int> ids;
    for (int j = 0; j < levels; ++j) {
      ids.insert(ids.end(), static_cast<size_t>(counts[static_cast<size_t>(j)]), j);
    }
    s.latent = make_grouped(std::move(ids), levels);
    s.theta.sigma2 = get_required<std::vector<double>>(doc.at("theta"), "sigma2");
  } else if (kind == "crossed") {
    s.latent = make_crossed(get_required<std::vector<int>>(d, "group1"),
                            get_required<int>(d, "levels1"),
                            get_required<std::vector<int>>(d, "group2"),
                            get_required<int>(d, "levels2"));
    s.theta.sigma2 = get_required<std::vector<double>>(doc.at("theta"), "sigma2");
  } else if (kind == "gp") {
    auto rows = get_required<std::vector<std::vector<double>>>(d, "coords");
    Eigen::MatrixXd coords(static_cast<Eigen::Index>(rows.size()),
                           get_required<int>(d, "dim"));
    for (size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != coords.cols()) {
        throw ConfigError("predict: ragged coords in fit file");
      }
      for (Eigen::Index j = 0; j < coords.cols(); ++j) {
        coords(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<size_t>(j)];
      }
    }
    s.latent = GpDesign{std::move(coords)};
    s.theta.gp_sigma2 = get_required<double>(doc.at("theta"), "gp_sigma2");
    s.theta.gp_length = get_required<double>(doc.at("theta"), "gp_length");
  } else {
    throw ConfigError("predict: unknown design kind in fit file");
  }
  auto beta = get_required<std::vector<double>>(doc, "beta");
  s.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                             static_cast<Eigen::Index>(beta.size()));
  s.lambda = get_required<double>(doc, "lambda");
  s.c_eff = get_required<double>(doc, "c_eff");
  return s;
}

int cmd_predict(const CommonFlags& f) {
  if (f.data.empty()) throw ConfigError("predict: --data is required");
  json fit_doc = load_config(f.config);
  PosteriorSummary s = summary_from_json(fit_doc);

  Table t = read_csv(f.data);
  if (t.rows() == 0) throw DataError(f.data + ": no data rows");
  PredictRequest req;
  if (std::holds_alternative<GroupedDesign>(s.latent)) {
    req.group = int_column(t, "group1");
  } else if (std::holds_alternative<CrossedDesign>(s.latent)) {
    req.group = int_column(t, "group1");
    req.group2 = int_column(t, "group2");
  } else {
    Eigen::Index dim = std::get<GpDesign>(s.latent).coords.cols();
    req.coords.resize(static_cast<Eigen::Index>(t.rows()), dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto& col = t.column("coord" + std::to_string(j + 1));
      for (size_t i = 0; i < col.size(); ++i) {
        req.coords(static_cast<Eigen::Index>(i), j) = col[i];
      }
    }
  }
  if (s.beta.size() > 0) {
    req.X.resize(static_cast<Eigen::Index>(t.rows()), s.beta.size());
    for (Eigen::Index j = 0; j < s.beta.size(); ++j) {
      const auto& col = t.column("x" + std::to_string(j + 1));
      for (size_t i = 0; i < col.size(); ++i) {
        req.X(static_cast<Eigen::Index>(i), j) = col[i];
      }
    }
  }

  Prediction pred = predict(s, req);
  Table out;
  out.columns = {"quantile_estimate", "latent_sd"};
  out.data.resize(2);
  out.data[0].assign(pred.quantile.begin(), pred.quantile.end());
  out.data[1].resize(static_cast<size_t>(pred.latent_var.size()));
  for (Eigen::Index i = 0; i < pred.latent_var.size(); ++i) {
    out.data[1][static_cast<size_t>(i)] = std::sqrt(pred.latent_var[i]);
  }
  write_csv(f.out, out);
  return 0;
}

// --------------------------------------------------------------- benchmark

std::vector<CurvatureMethod> parse_methods(const json& cfg) {
  std::vector<CurvatureMethod> methods;
  for (const auto& name : get_or<std::vector<std::string>>(
           cfg, "methods", {"tkc", "fisher"})) {
    methods.push_back(parse_method(name));
  }
  return methods;
}

int cmd_benchmark(const CommonFlags& f) {
  json cfg = load_config(f.config);
  reject_unknown(cfg,
                 {"design", "noise", "snr", "noise_scale", "tau", "m", "n_j", "m2", "sigma2_u",
                  "sigma2_2", "n", "dim", "gp_sigma2", "gp_length", "replications",
                  "train_frac", "methods", "min_drop", "seed", "threads"},
                 "benchmark config");
  ExperimentConfig ec;
  ec.design = parse_design(get_required<std::string>(cfg, "design"));
  ec.noise.family = parse_noise(get_or<std::string>(cfg, "noise", "ald"));
  ec.noise.snr = get_or<double>(cfg, "snr", 5.0);
  ec.noise.fixed_scale = get_or<double>(cfg, "noise_scale", 0.0);
  ec.tau = checked_tau(f.tau.value_or(get_or<double>(cfg, "tau", 0.8)));
  ec.m = get_or<int>(cfg, "m", ec.m);
  ec.n_j = get_or<int>(cfg, "n_j", ec.n_j);
  ec.m2 = get_or<int>(cfg, "m2", ec.m2);
  ec.sigma2_u = get_or<double>(cfg, "sigma2_u", ec.sigma2_u);
  ec.sigma2_2 = get_or<double>(cfg, "sigma2_2", ec.sigma2_2);
  ec.n = get_or<int>(cfg, "n", ec.n);
  ec.dim = get_or<int>(cfg, "dim", ec.dim);
  ec.gp_sigma2 = get_or<double>(cfg, "gp_sigma2", ec.gp_sigma2);
  ec.gp_length = get_or<double>(cfg, "gp_length", ec.gp_length);
  ec.replications = get_or<int>(cfg, "replications", ec.replications);
  ec.train_frac = get_or<double>(cfg, "train_frac", ec.train_frac);
  ec.methods = parse_methods(cfg);
  if (f.curvature) ec.methods = {parse_method(*f.curvature)};
  ec.min_drop = get_or<double>(cfg, "min_drop", 0.0);
  ec.seed = f.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 1));
  ec.threads = f.threads.value_or(get_or<int>(cfg, "threads", 0));

  ExperimentReport report = run_experiment(ec);
  // The report CSV mixes strings and numbers; emit it directly.
  std::ofstream out(f.out);
  if (!out) throw DataError("cannot write " + f.out);
  out << "design,noise,m,n_j,method,metric,mean,se,runtime_s\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : report.rows) {
    out << row.design << "," << row.noise << "," << row.m << "," << row.n_j << ","
        << row.method << "," << row.metric << "," << num(row.mean) << ","
        << num(row.se) << "," << num(row.runtime_s) << "\n";
  }
  if (!out) throw DataError("write failed: " + f.out);

  int failures = 0;
  for (const auto& per_method : report.outcomes) {
    for (const auto& o : per_method) {
      if (o.failed) {
        ++failures;
        std::cerr << "replication failed: " << o.error << "\n";
      }
    }
  }
  return failures == static_cast<int>(report.outcomes.size() * ec.replications) &&
                 failures > 0
             ? 4
             : 0;
}

// --------------------------------------------------------------- mll-check

int cmd_mll_check(const CommonFlags& f) {
  json cfg = load_config(f.config);
  reject_unknown(cfg,
                 {"m", "group_sizes", "tau", "sigma2_u", "noise", "snr", "noise_scale", "datasets",
                  "nodes", "methods", "seed", "threads"},
                 "mll-check config");
  MllConfig mc;
  mc.m = get_or<int>(cfg, "m", mc.m);
  mc.group_sizes = get_or<std::vector<int>>(cfg, "group_sizes", mc.group_sizes);
  mc.tau = checked_tau(f.tau.value_or(get_or<double>(cfg, "tau", 0.8)));
  mc.sigma2_u = get_or<double>(cfg, "sigma2_u", mc.sigma2_u);
  mc.noise.family = parse_noise(get_or<std::string>(cfg, "noise", "ald"));
  mc.noise.snr = get_or<double>(cfg, "snr", 5.0);
  mc.noise.fixed_scale = get_or<double>(cfg, "noise_scale", 1.0);
  mc.datasets = get_or<int>(cfg, "datasets", mc.datasets);
  mc.nodes = get_or<int>(cfg, "nodes", mc.nodes);
  mc.methods = parse_methods(cfg);
  if (f.curvature) mc.methods = {parse_method(*f.curvature)};
  mc.seed = f.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 1));
  mc.threads = f.threads.value_or(get_or<int>(cfg, "threads", 0));

  auto rows = run_mll_check(mc);
  std::ofstream out(f.out);
  if (!out) throw DataError("cannot write " + f.out);
  out << "n_j,method,dataset,group,log_marginal,oracle,relative_error\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  int failures = 0;
  for (const auto& row : rows) {
    if (row.failed) {
      ++failures;
      std::cerr << "mll-check: n_j=" << row.n_j << " method=" << row.method
                << " dataset=" << row.dataset << " failed: " << row.error << "\n";
      continue;
    }
    out << row.n_j << "," << row.method << "," << row.dataset << "," << row.group
        << "," << num(row.log_marginal) << "," << num(row.oracle) << ","
        << num(row.rel_error) << "\n";
  }
  if (!out) throw DataError("write failed: " + f.out);
  if (failures > 0) std::cerr << failures << " dataset fit(s) failed\n";
  return failures == static_cast<int>(rows.size()) && failures > 0 ? 4 : 0;
}

// ---------------------------------------------------------------- coverage

int cmd_coverage(const CommonFlags& f) {
  json cfg = load_config(f.config);
  reject_unknown(cfg,
                 {"m", "n_j", "tau", "sigma2_u", "noise", "snr", "noise_scale", "level", "scale",
                  "replications", "seed", "threads"},
                 "coverage config");
  CoverageConfig cc;
  cc.m = get_or<int>(cfg, "m", cc.m);
  cc.n_j = get_or<int>(cfg, "n_j", cc.n_j);
  cc.tau = checked_tau(f.tau.value_or(get_or<double>(cfg, "tau", 0.8)));
  cc.sigma2_u = get_or<double>(cfg, "sigma2_u", cc.sigma2_u);
  cc.noise.family = parse_noise(get_or<std::string>(cfg, "noise", "gaussian"));
  cc.noise.snr = get_or<double>(cfg, "snr", 5.0);
  cc.noise.fixed_scale = get_or<double>(cfg, "noise_scale", 0.0);
  cc.level = get_or<double>(cfg, "level", cc.level);
  std::string scale = get_or<std::string>(cfg, "scale", "density_scale");
  if (scale == "as_paper") {
    cc.scale = SandwichScale::as_paper;
  } else if (scale == "density_scale") {
    cc.scale = SandwichScale::density_scale;
  } else {
    throw ConfigError("unknown sandwich scale: " + scale);
  }
  cc.replications = get_or<int>(cfg, "replications", cc.replications);
  cc.seed = f.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 1));
  cc.threads = f.threads.value_or(get_or<int>(cfg, "threads", 0));

  auto rows = run_coverage(cc);
  std::ofstream out(f.out);
  if (!out) throw DataError("cannot write " + f.out);
  out << "rep,data_seed,noise,level,method,coverage,mean_width\n";
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  const char* noise = cc.noise.family == NoiseFamily::gaussian ? "gaussian"
                      : cc.noise.family == NoiseFamily::student_t2
                          ? "student_t2"
                          : "ald";
  int failures = 0;
  for (const auto& row : rows) {
    if (row.failed) {
      ++failures;
      std::cerr << "replication " << row.rep << " failed: " << row.error << "\n";
      continue;
    }
    out << row.rep << "," << row.data_seed << "," << noise << "," << num(cc.level)
        << ",sandwich," << num(row.sandwich_coverage) << ","
        << num(row.sandwich_mean_width) << "\n";
    out << row.rep << "," << row.data_seed << "," << noise << "," << num(cc.level)
        << ",naive," << num(row.naive_coverage) << "," << num(row.naive_mean_width)
        << "\n";
  }
  if (!out) throw DataError("write failed: " + f.out);
  return failures == static_cast<int>(rows.size()) && failures > 0 ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile regression for latent Gaussian models"};
  app.require_subcommand(1);

  CommonFlags sim_f, fit_f, pred_f, bench_f, mll_f, cov_f;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim, sim_f, false);
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  add_common(fit_cmd, fit_f, true);
  CLI::App* pred = app.add_subcommand("predict", "Predict from a saved fit");
  add_common(pred, pred_f, true);
  CLI::App* bench = app.add_subcommand("benchmark", "Replicated simulation study");
  add_common(bench, bench_f, false);
  CLI::App* mll = app.add_subcommand("mll-check", "Laplace vs quadrature comparison");
  add_common(mll, mll_f, false);
  CLI::App* cov = app.add_subcommand("coverage", "Sandwich interval coverage study");
  add_common(cov, cov_f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_f);
    if (fit_cmd->parsed()) return cmd_fit(fit_f);
    if (pred->parsed()) return cmd_predict(pred_f);
    if (bench->parsed()) return cmd_benchmark(bench_f);
    if (mll->parsed()) return cmd_mll_check(mll_f);
    if (cov->parsed()) return cmd_coverage(cov_f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
