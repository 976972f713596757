#ifndef RDMC_HARNESS_HPP_
#define RDMC_HARNESS_HPP_

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "rdmc/metrics.hpp"
#include "rdmc/oracles.hpp"
#include "rdmc/ou.hpp"
#include "rdmc/samplers.hpp"
#include "rdmc/score.hpp"
#include "rdmc/targets.hpp"

namespace rdmc::harness {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RunError("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
  if (!j.contains(key) || j[key].is_null()) return def;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

template <typename T>
T require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing config field '" + key + "'");
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

struct BuiltTarget {
  TargetDensity target;
  std::optional<ReferenceSampler> reference;
  json resolved;
};

inline BuiltTarget build_target(const json& j) {
  const std::string kind = detail::require<std::string>(j, "kind");
  BuiltTarget out;
  out.resolved = j;
  out.resolved["kind"] = kind;
  if (kind == "gmm") {
    GaussianMixtureSpec spec;
    spec.means = detail::require<std::vector<Point>>(j, "means");
    spec.log_weights = detail::get_or<std::vector<double>>(
        j, "log_weights", std::vector<double>(spec.means.size(), 0.0));
    out.resolved["log_weights"] = spec.log_weights;
    auto [t, ref] = make_gmm(spec);
    out.target = t;
    out.reference = ref;
  } else if (kind == "circle_gmm") {
    const int modes = detail::require<int>(j, "num_modes");
    const double r = detail::require<double>(j, "radius_scale");
    const int dim = detail::get_or<int>(j, "dim", 2);
    out.resolved["dim"] = dim;
    out.resolved["layout"] = "modes at angle 2*pi*j/K on a circle of radius 2*r";
    auto [t, ref] = make_circle_gmm(modes, r, dim);
    out.target = t;
    out.reference = ref;
  } else if (kind == "ill_gaussian") {
    auto mean = detail::require<Point>(j, "mean");
    auto cov = detail::require<Point>(j, "diag_cov");
    auto [t, ref] = make_ill_conditioned_gaussian(mean, cov);
    out.target = t;
    out.reference = ref;
  } else if (kind == "sublinear") {
    out.target = make_sublinear_tail(detail::require<double>(j, "a"),
                                     detail::require<int>(j, "dim"));
  } else if (kind == "cauchy") {
    auto [t, ref] = make_cauchy(detail::require<int>(j, "dim"));
    out.target = t;
    out.reference = ref;
  } else if (kind == "funnel") {
    auto [t, ref] = make_neals_funnel(detail::require<int>(j, "dim"));
    out.target = t;
    out.reference = ref;
  } else {
    throw ConfigError("unknown target kind '" + kind + "'");
  }
  return out;
}

inline EstimatorConfig parse_estimator(const json& j, json& resolved) {
  EstimatorConfig cfg;
  const std::string kind = detail::get_or<std::string>(j, "kind", "ula");
  if (kind == "importance")
    cfg.kind = EstimatorKind::importance;
  else if (kind == "ula")
    cfg.kind = EstimatorKind::ula;
  else if (kind == "is_init_ula")
    cfg.kind = EstimatorKind::is_init_ula;
  else
    throw ConfigError("unknown estimator kind '" + kind + "'");
  cfg.sample_count = detail::get_or<int>(j, "sample_count", 100);
  cfg.inner_steps = detail::get_or<int>(j, "inner_steps", 50);
  cfg.inner_step_size = detail::get_or<double>(j, "inner_step_size", 0.0);
  cfg.is_pool = detail::get_or<int>(j, "is_pool", 100);
  cfg.init_at_is_mean = detail::get_or<bool>(j, "init_at_is_mean", false);
  try {
    cfg.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
  resolved = {{"kind", kind},
              {"sample_count", cfg.sample_count},
              {"inner_steps", cfg.inner_steps},
              {"inner_step_size", cfg.inner_step_size},
              {"is_pool", cfg.is_pool},
              {"init_at_is_mean", cfg.init_at_is_mean}};
  return cfg;
}

struct Row {
  std::string sampler;
  int step = 0;
  long long grad_evals = 0;
  long long f_evals = 0;
  std::optional<double> mmd2;
  std::optional<double> moment1, moment2, moment3;
  std::optional<double> mode_dev;
  std::optional<double> wall_ms;
};

struct RunRecord {
  std::vector<Row> rows;
  json resolved_config;
  std::filesystem::path out_dir;
};

inline std::string csv_of(const std::vector<Row>& rows) {
  std::ostringstream csv;
  csv << "sampler,step,grad_evals,f_evals,mmd2,moment1,moment2,moment3,"
         "mode_dev,wall_ms\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? detail::fmt(*v) : std::string();
  };
  for (const Row& r : rows) {
    csv << r.sampler << ',' << r.step << ',' << r.grad_evals << ','
        << r.f_evals << ',' << cell(r.mmd2) << ',' << cell(r.moment1) << ','
        << cell(r.moment2) << ',' << cell(r.moment3) << ','
        << cell(r.mode_dev) << ',' << cell(r.wall_ms) << '\n';
  }
  return csv.str();
}

inline std::string svg_line_plot(
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>&
        series,
    const std::string& x_label, const std::string& y_label);

// Runs every configured sampler on the configured target, evaluating the
// requested metrics at each recorded snapshot, and writes trace.csv,
// config_resolved.json and (when MMD is on) mmd.svg into out_dir.
inline RunRecord run_experiment(const json& cfg,
                                std::optional<std::string> out_dir_override = {},
                                std::optional<std::uint64_t> seed_override = {}) {
  json resolved = cfg;
  BuiltTarget built = build_target(detail::require<json>(cfg, "target"));
  resolved["target"] = built.resolved;

  if (!cfg.contains("seed") && !seed_override)
    throw ConfigError("missing config field 'seed'");
  const std::uint64_t seed =
      seed_override ? *seed_override : detail::require<std::uint64_t>(cfg, "seed");
  resolved["seed"] = seed;

  const std::size_t particles = detail::get_or<int>(cfg, "particles", 1000);
  resolved["particles"] = particles;
  const int snapshots_stride = detail::get_or<int>(cfg, "snapshots_stride", 0);
  resolved["snapshots_stride"] = snapshots_stride;
  std::optional<long long> cap;
  if (cfg.contains("budget_cap") && !cfg["budget_cap"].is_null())
    cap = detail::require<long long>(cfg, "budget_cap");
  const bool record_wall = detail::get_or<bool>(cfg, "record_wall_time", false);
  resolved["record_wall_time"] = record_wall;

  json metrics_cfg = detail::get_or<json>(cfg, "metrics", json::object());
  const bool want_mmd = detail::get_or<bool>(metrics_cfg, "mmd_vs_reference", false);
  std::vector<int> moment_orders =
      detail::get_or<std::vector<int>>(metrics_cfg, "moments", {});
  std::optional<std::vector<Point>> mode_points;
  if (metrics_cfg.contains("mode_weights") && !metrics_cfg["mode_weights"].is_null())
    mode_points = detail::require<std::vector<Point>>(metrics_cfg, "mode_weights");
  resolved["metrics"] = {{"mmd_vs_reference", want_mmd},
                         {"moments", moment_orders}};
  if (mode_points) resolved["metrics"]["mode_weights"] = *mode_points;

  if (want_mmd && (!built.reference || !built.reference->exact))
    throw ConfigError("no exact reference sampler");

  const json samplers = detail::require<json>(cfg, "samplers");
  if (!samplers.is_array() || samplers.empty())
    throw ConfigError("config field 'samplers' must be a non-empty array");

  std::filesystem::path out_dir =
      out_dir_override ? *out_dir_override
                       : detail::get_or<std::string>(cfg, "out_dir", "out");
  resolved["out_dir"] = out_dir.string();
  std::filesystem::create_directories(out_dir);

  Rng root(seed);

  // Reference sample for MMD: 10x the particle count.
  std::optional<MmdAgainstReference> mmd_eval;
  if (want_mmd) {
    Rng ref_rng = root.substream(0x2efull);
    std::vector<Point> ref = built.reference->draw(10 * particles, ref_rng);
    const double h = median_heuristic_bandwidth(ref, ref);
    resolved["mmd_bandwidth"] = h;
    resolved["mmd_estimator"] = "biased_v_statistic";
    mmd_eval.emplace(std::move(ref), h);
  }

  RunRecord record;
  record.out_dir = out_dir;

  auto add_rows = [&](const std::string& name, const SamplerRun& run,
                      double wall_ms) {
    for (const TraceEntry& e : run.trace) {
      Row row;
      row.sampler = name;
      row.step = e.step_index;
      row.grad_evals = e.grad_evals;
      row.f_evals = e.f_evals;
      if (mmd_eval) row.mmd2 = (*mmd_eval)(e.ensemble.particles);
      for (int p : moment_orders) {
        const double m = moment_sum(e.ensemble.particles, p);
        if (p == 1) row.moment1 = m;
        if (p == 2) row.moment2 = m;
        if (p == 3) row.moment3 = m;
      }
      if (mode_points) {
        auto w = mode_weights(e.ensemble, *mode_points);
        double dev = 0.0;
        for (double wi : w)
          dev = std::max(dev, std::abs(wi - 1.0 / mode_points->size()));
        row.mode_dev = dev;
      }
      if (record_wall && &e == &run.trace.back()) row.wall_ms = wall_ms;
      record.rows.push_back(std::move(row));
    }
  };

  json resolved_samplers = json::array();
  std::size_t sampler_index = 0;
  for (const json& sj : samplers) {
    const std::string kind = detail::require<std::string>(sj, "kind");
    const std::string name = detail::get_or<std::string>(sj, "name", kind);
    Rng srng = root.substream(1000 + sampler_index);
    const auto t0 = std::chrono::steady_clock::now();
    json rs = sj;
    rs["name"] = name;

    if (kind == "rdmc") {
      const json sched_j = sj.contains("schedule")
                               ? sj["schedule"]
                               : detail::require<json>(cfg, "schedule");
      Schedule schedule(detail::require<double>(sched_j, "T"),
                        detail::require<double>(sched_j, "eta"));
      rs["schedule"] = {{"T", schedule.terminal_time},
                        {"eta", schedule.outer_step},
                        {"num_steps", schedule.num_steps}};
      const json est_j = sj.contains("estimator")
                             ? sj["estimator"]
                             : detail::get_or<json>(cfg, "estimator", json::object());
      json est_resolved;
      EstimatorConfig est = parse_estimator(est_j, est_resolved);
      rs["estimator"] = est_resolved;

      RdmcOptions opts;
      opts.snapshot_stride = snapshots_stride;
      opts.budget_cap = cap;

      std::optional<ParticleEnsemble> warm;
      if (sj.contains("init_hat_p") && !sj["init_hat_p"].is_null()) {
        const json& ij = sj["init_hat_p"];
        const int iters = detail::require<int>(ij, "iters");
        const double step0 = detail::get_or<double>(
            ij, "step", schedule.outer_step);
        rs["init_hat_p"] = {{"iters", iters}, {"step", step0}};
        BudgetLedger warm_ledger;
        warm_ledger.cap = cap;
        warm = init_hat_p(built.target, schedule.terminal_time, iters, step0,
                          est, particles, srng.substream(0xa16ull), opts,
                          &warm_ledger);
        // warm-up cost carries into the main run below via opts cap headroom
        if (cap) opts.budget_cap = *cap - warm_ledger.grad_evals;
      }

      SamplerRun run = rdmc(built.target, schedule, est, particles,
                            srng.substream(0x5a3ull), opts,
                            warm ? &*warm : nullptr);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      add_rows(name, run, ms);
    } else if (kind == "lmc" || kind == "ulmc") {
      const double step = detail::require<double>(sj, "step");
      const int iters = detail::require<int>(sj, "iters");
      LangevinOptions opts;
      opts.snapshot_stride = snapshots_stride;
      opts.budget_cap = cap;
      Rng init_rng = srng.substream(0xf00dull);
      ParticleEnsemble init =
          standard_normal_ensemble(built.target.dim, particles, init_rng);
      SamplerRun run;
      if (kind == "lmc") {
        run = lmc(built.target, step, iters, init, srng.substream(0x5a3ull), opts);
      } else {
        const double friction = detail::get_or<double>(sj, "friction", 2.0);
        rs["friction"] = friction;
        rs["discretization"] = "exponential integrator, frozen gradient";
        run = ulmc(built.target, step, friction, iters, init,
                   srng.substream(0x5a3ull), opts);
      }
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      add_rows(name, run, ms);
    } else {
      throw ConfigError("unknown sampler kind '" + kind + "'");
    }
    resolved_samplers.push_back(rs);
    ++sampler_index;
  }
  resolved["samplers"] = resolved_samplers;
  if (cap) resolved["budget_cap"] = *cap;

  record.resolved_config = resolved;
  detail::atomic_write(out_dir / "trace.csv", csv_of(record.rows));
  detail::atomic_write(out_dir / "config_resolved.json", resolved.dump(2) + "\n");

  if (mmd_eval) {
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    for (const Row& r : record.rows) {
      if (!r.mmd2) continue;
      const double cost =
          r.grad_evals > 0 ? double(r.grad_evals) : double(r.f_evals);
      if (cost <= 0.0 || *r.mmd2 <= 0.0) continue;
      if (series.empty() || series.back().first != r.sampler)
        series.push_back({r.sampler, {}});
      series.back().second.push_back({cost, *r.mmd2});
    }
    detail::atomic_write(out_dir / "mmd.svg",
                         svg_line_plot(series, "gradient evaluations", "MMD^2"));
  }
  return record;
}

// Minimal log-log polyline SVG, one series per sampler.
inline std::string svg_line_plot(
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>&
        series,
    const std::string& x_label, const std::string& y_label) {
  const int W = 640, H = 480, M = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [name, pts] : series)
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, std::log10(x));
      xmax = std::max(xmax, std::log10(x));
      ymin = std::min(ymin, std::log10(y));
      ymax = std::max(ymax, std::log10(y));
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) {
    return M + (std::log10(x) - xmin) / (xmax - xmin) * (W - 2 * M);
  };
  auto py = [&](double y) {
    return H - M - (std::log10(y) - ymin) / (ymax - ymin) * (H - 2 * M);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                 "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M
      << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M
      << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 15
      << "\" text-anchor=\"middle\" font-size=\"14\">" << x_label
      << " (log)</text>\n";
  svg << "<text x=\"15\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 15 "
      << H / 2 << ")\">" << y_label << " (log)</text>\n";
  int ci = 0;
  for (const auto& [name, pts] : series) {
    const char* color = colors[ci % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << W - M + 5 << "\" y=\"" << M + 16 * ci
        << "\" font-size=\"12\" fill=\"" << color << "\">" << name
        << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

struct ScoreCheckRow {
  std::string estimator;
  long long budget;
  long long f_evals;
  long long grad_evals;
  double error;  // max-abs coordinate error of the drift vs 2 * oracle score
};

// Estimator-error study against the closed-form (diagonal Gaussian) or
// quadrature (1-d) oracle.
inline std::vector<ScoreCheckRow> score_check(const json& cfg) {
  BuiltTarget built = build_target(detail::require<json>(cfg, "target"));
  const Point x = detail::require<Point>(cfg, "x");
  const double tau = detail::require<double>(cfg, "tau");
  const std::uint64_t seed = detail::require<std::uint64_t>(cfg, "seed");
  const auto budgets = detail::require<std::vector<long long>>(cfg, "budgets");
  const json est_list = detail::require<json>(cfg, "estimators");
  if (static_cast<int>(x.size()) != built.target.dim)
    throw ConfigError("score-check: x has wrong dimension");

  // Oracle drift 2 * grad ln p_tau(x).
  Point oracle(x.size());
  const std::string kind = built.resolved["kind"];
  if (kind == "ill_gaussian") {
    const Point mean = built.resolved["mean"].get<Point>();
    const Point cov = built.resolved["diag_cov"].get<Point>();
    const TransitionParams p = transition_params(tau);
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double v = p.mean_scale * p.mean_scale * cov[c] + p.variance;
      oracle[c] = -2.0 * (x[c] - p.mean_scale * mean[c]) / v;
    }
  } else if (built.target.dim == 1) {
    QuadratureGrid grid{detail::get_or<double>(cfg, "grid_lo", -30.0),
                        detail::get_or<double>(cfg, "grid_hi", 30.0),
                        detail::get_or<int>(cfg, "grid_nodes", 8001)};
    oracle[0] = 2.0 * quadrature_score(built.target, x[0], tau, grid);
  } else {
    throw ConfigError(
        "score-check needs a diagonal Gaussian target or a 1-d target");
  }

  std::vector<ScoreCheckRow> rows;
  Rng root(seed);
  std::size_t idx = 0;
  for (const json& ej : est_list) {
    json est_resolved;
    EstimatorConfig base = parse_estimator(ej, est_resolved);
    const std::string name =
        detail::get_or<std::string>(ej, "name", est_resolved["kind"]);
    for (long long budget : budgets) {
      EstimatorConfig e = base;
      e.sample_count = static_cast<int>(budget);
      PosteriorContext ctx(x, tau, built.target);
      Rng rng = root.substream(idx++);
      ScoreEstimate est = estimate_score(ctx, e, rng);
      double err = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c)
        err = std::max(err, std::abs(est.drift[c] - oracle[c]));
      rows.push_back({name, budget, est.f_evals, est.grad_evals, err});
    }
  }
  return rows;
}

inline std::string score_check_table(const std::vector<ScoreCheckRow>& rows) {
  std::ostringstream out;
  out << "estimator,budget,f_evals,grad_evals,error\n";
  for (const auto& r : rows)
    out << r.estimator << ',' << r.budget << ',' << r.f_evals << ','
        << r.grad_evals << ',' << detail::fmt(r.error) << '\n';
  return out.str();
}

}  // namespace rdmc::harness

#endif  // RDMC_HARNESS_HPP_
