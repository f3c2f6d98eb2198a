#ifndef SMOLNN_PIPELINE_HPP_
#define SMOLNN_PIPELINE_HPP_

// End-to-end neuro-integration: precalculation on [0, tau], parameter
// retrieving, predictor training, extrapolation to [0, T], and reconstruction
// of densities from the predicted parameters. An optional reference run over
// [0, T] is only read by compare().

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "smolnn/error.hpp"
#include "smolnn/integrator.hpp"
#include "smolnn/kernels.hpp"
#include "smolnn/mlp.hpp"
#include "smolnn/predictor.hpp"
#include "smolnn/scaling_net.hpp"
#include "smolnn/transforms.hpp"

namespace smolnn {

/// Error raised inside a pipeline stage; what() names the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::exception& cause, bool config)
      : Error(stage + ": " + cause.what()), stage_(std::move(stage)), config_(config) {}
  const std::string& stage() const noexcept { return stage_; }
  bool is_config_error() const noexcept { return config_; }

 private:
  std::string stage_;
  bool config_;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct PipelineConfig {
  KernelSpec kernel = KernelSpec::constant();
  SolverConfig precalc;                 // integrates [0, tau]
  std::optional<SolverConfig> reference;  // integrates [0, T] for comparison only
  TransformConfig transform;
  std::size_t stride = 20;   // fit every stride-th precalc step
  int family_order = 1;      // 1: (W, B); 2: (w1, w2, b1, b2)
  FitConfig fit;
  double fit_start = 0.0;    // first fitted time; anchors the parameter transforms
  TrainConfig train;         // windows, horizon, penalties, epochs; seed is the base seed
  std::size_t output_stride = 20;  // rows of the reconstructed series, in grid_dt steps
  std::size_t output_n = 0;        // sizes to reconstruct; 0 = reference n or precalc n
  bool parallel_training = true;

  double tau() const { return precalc.dt * static_cast<double>(precalc.steps); }

  void validate() const {
    precalc.validate();
    transform.validate();
    fit.validate();
    detail::require(family_order == 1 || family_order == 2, "pipeline: family order must be 1 or 2");
    detail::require(stride >= 1 && output_stride >= 1, "pipeline: strides must be >= 1");
    train.validate();
    detail::require(tau() <= train.horizon + 1e-9, "pipeline: precalculation horizon must not exceed T");
    detail::require(train.valid_end <= tau() + 1e-9,
                    "pipeline: training and validation windows must lie inside [0, tau]");
    detail::require(fit_start <= train.train_begin + 1e-9, "pipeline: fit_start must not exceed t_a");
    if (reference) {
      reference->validate();
      const double t_ref = reference->dt * static_cast<double>(reference->steps);
      detail::require(t_ref + 1e-9 >= train.horizon, "pipeline: reference run must cover [0, T]");
    }
  }
};

struct StageTimings {
  double precalculation = 0.0;
  double retrieving = 0.0;
  double prediction = 0.0;
  double reconstruction = 0.0;
  double reference = 0.0;
};

/// Transformed-density errors on the prediction window t > tau.
struct ComparisonMetrics {
  std::vector<double> times;
  std::size_t n = 0;
  std::vector<double> abs_error;   // times.size() x n, |T(pred) - T(ref)|
  std::vector<double> mass_pred;
  std::vector<double> mass_ref;
  std::vector<double> row_rmse;    // per time, same cell rule as rmse
  double rmse = 0.0;               // over cells where either side is above the cutoff
  std::size_t cells = 0;
  double max_mass_rel_error = 0.0;
  // Filled by run_pipeline for the one-neuron family:
  std::vector<double> breakpoint_pred;
  std::vector<double> breakpoint_ref;
  std::vector<double> segment_rmse;  // over k < reference breakpoint

  bool empty() const noexcept { return times.empty(); }
  double error(std::size_t row, std::size_t k) const { return abs_error[row * n + (k - 1)]; }
};

/// Per-time parameter table with named columns.
struct ParamTable {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<std::vector<double>> columns;
  std::vector<double> rmse;      // fit error per row; empty for predicted tables
  std::vector<double> rmse_one;  // one-neuron fit error alongside a two-neuron fit

  std::size_t rows() const noexcept { return times.size(); }

  const std::vector<double>& column(std::string_view name) const {
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (names[c] == name) return columns[c];
    }
    throw ConfigError("parameter table has no column '" + std::string(name) + "'");
  }
};

/// Header "t,<names...>[,rmse][,rmse_one]"; values printed with 17 significant
/// digits so a write/read round trip is exact.
inline void write_table_csv(const ParamTable& t, std::ostream& os) {
  os << 't';
  for (const auto& n : t.names) os << ',' << n;
  if (!t.rmse.empty()) os << ",rmse";
  if (!t.rmse_one.empty()) os << ",rmse_one";
  os << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t i = 0; i < t.rows(); ++i) {
    put(t.times[i]);
    for (const auto& col : t.columns) {
      os << ',';
      put(col[i]);
    }
    if (!t.rmse.empty()) {
      os << ',';
      put(t.rmse[i]);
    }
    if (!t.rmse_one.empty()) {
      os << ',';
      put(t.rmse_one[i]);
    }
    os << '\n';
  }
}

inline ParamTable read_table_csv(std::istream& is, const std::string& source = "table") {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  if (!std::getline(is, line)) throw IoError(source + ": empty file");
  const auto header = split(line);
  if (header.empty() || header[0] != "t") throw IoError(source + ": header must start with 't'");
  ParamTable t;
  std::vector<int> role(header.size(), -1);  // -1 time, 0.. column, -2 rmse, -3 rmse_one
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "rmse") {
      role[c] = -2;
    } else if (header[c] == "rmse_one") {
      role[c] = -3;
    } else {
      role[c] = static_cast<int>(t.names.size());
      t.names.push_back(header[c]);
    }
  }
  t.columns.resize(t.names.size());
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw IoError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                    " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto* end = cells[c].data() + cells[c].size();
      const auto [ptr, ec] = std::from_chars(cells[c].data(), end, v);
      if (ec != std::errc{} || ptr != end) {
        throw IoError(source + ": line " + std::to_string(line_no) + ": cannot parse '" + cells[c] + "'");
      }
      if (c == 0) {
        t.times.push_back(v);
      } else if (role[c] >= 0) {
        t.columns[static_cast<std::size_t>(role[c])].push_back(v);
      } else if (role[c] == -2) {
        t.rmse.push_back(v);
      } else {
        t.rmse_one.push_back(v);
      }
    }
  }
  if (t.times.empty()) throw IoError(source + ": no data rows");
  return t;
}

struct PipelineResult {
  DensitySeries precalc;
  ParamTable fitted;     // raw fitted parameters on the stride grid
  ParamTable latent;     // what the predictors were trained on
  ParamTable predicted;  // raw parameters on the prediction grid
  ParamTable predicted_latent;
  std::vector<double> anchors;  // W0, B0 for the one-neuron family
  std::vector<TrainResult> training;
  DensitySeries reconstructed;
  std::optional<DensitySeries> reference;
  ComparisonMetrics metrics;
  StageTimings timings;
};

/// Compares rows of pred and reference at equal times greater than after_time.
inline ComparisonMetrics compare(const DensitySeries& pred, const DensitySeries& ref,
                                 const TransformConfig& cfg, double after_time = -1.0) {
  if (pred.n != ref.n) throw ConfigError("compare: size mismatch (" + std::to_string(pred.n) + " vs " +
                                         std::to_string(ref.n) + ")");
  if (std::abs(pred.dt - ref.dt) > 1e-9 * std::max(pred.dt, ref.dt)) {
    throw ConfigError("compare: time grids differ");
  }
  ComparisonMetrics m;
  m.n = pred.n;
  const std::size_t rows = std::min(pred.rows(), ref.rows());
  double sq = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = pred.time(i);
    if (!(t > after_time + 1e-9 * pred.dt)) continue;
    m.times.push_back(t);
    const auto p = pred.row(i);
    const auto r = ref.row(i);
    double row_sq = 0.0;
    std::size_t row_cells = 0;
    for (std::size_t k = 0; k < pred.n; ++k) {
      const double e = std::abs(log_density(p[k], cfg) - log_density(r[k], cfg));
      m.abs_error.push_back(e);
      if (p[k] > cfg.eps || r[k] > cfg.eps) {
        row_sq += e * e;
        ++row_cells;
      }
    }
    sq += row_sq;
    m.cells += row_cells;
    m.row_rmse.push_back(row_cells ? std::sqrt(row_sq / static_cast<double>(row_cells)) : 0.0);
    const double mp = mass(p), mr = mass(r);
    m.mass_pred.push_back(mp);
    m.mass_ref.push_back(mr);
    if (mr > 0.0) m.max_mass_rel_error = std::max(m.max_mass_rel_error, std::abs(mp - mr) / mr);
  }
  m.rmse = m.cells ? std::sqrt(sq / static_cast<double>(m.cells)) : 0.0;
  return m;
}

namespace detail {

class StageClock {
 public:
  StageClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(name, e, true);
  } catch (const IoError& e) {
    throw StageError(name, e, true);
  } catch (const std::exception& e) {
    throw StageError(name, e, false);
  }
}

inline std::vector<std::string> param_names(int order) {
  if (order == 1) return {"W", "B"};
  return {"w1", "w2", "b1", "b2"};
}

inline void require_order(int order) {
  detail::require(order == 1 || order == 2, "family order must be 1 or 2");
}

inline bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace detail

/// Fits the profile family to strided rows of a solution.
inline ParamTable retrieve(const DensitySeries& series, int order, std::size_t stride, const TransformConfig& cfg,
                           const FitConfig& fit, double fit_start) {
  detail::require_order(order);
  ParamTable t;
  t.names = detail::param_names(order);
  auto fill = [&](const auto& traj) {
    t.times = traj.times;
    t.rmse = traj.fit_rmse;
    t.rmse_one = traj.baseline_rmse;
    for (std::size_t c = 0; c < t.names.size(); ++c) t.columns.push_back(traj.component(c));
  };
  if (order == 1) {
    fill(fit_trajectory<1>(series, stride, cfg, fit, fit_start));
  } else {
    fill(fit_trajectory<2>(series, stride, cfg, fit, fit_start));
  }
  return t;
}

/// Trains one predictor per latent column and returns results in column order.
inline std::vector<TrainResult> train_predictors(const ParamTable& latent, const TrainConfig& base,
                                                 bool parallel) {
  std::vector<NaturalSpline> splines;
  for (const auto& col : latent.columns) splines.emplace_back(latent.times, col);
  std::vector<TrainConfig> cfgs(latent.columns.size(), base);
  for (std::size_t c = 0; c < cfgs.size(); ++c) cfgs[c].seed = derive_seed(base.seed, c);

  std::vector<TrainResult> out(latent.columns.size());
  if (parallel) {
    std::vector<std::future<TrainResult>> jobs;
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
      jobs.push_back(std::async(std::launch::async, [&, c] {
        return train_predictor([&](double t) { return splines[c](t); }, cfgs[c]);
      }));
    }
    for (std::size_t c = 0; c < jobs.size(); ++c) out[c] = jobs[c].get();
  } else {
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
      out[c] = train_predictor([&](double t) { return splines[c](t); }, cfgs[c]);
    }
  }
  return out;
}

struct Prediction {
  ParamTable latent;
  ParamTable predicted;  // raw parameters on [0, T]
  ParamTable predicted_latent;
  std::vector<double> anchors;
  std::vector<TrainResult> training;
};

/// Transforms (one-neuron family only), trains, extrapolates over [0, T], and
/// maps back to raw parameters. Anchors are the first fitted row.
inline Prediction predict_parameters(const ParamTable& fitted, int order, const TrainConfig& cfg, bool parallel) {
  detail::require_order(order);
  cfg.validate();
  if (fitted.rows() < 2) throw ConfigError("predict: need at least two fitted samples");
  if (cfg.train_begin < fitted.times.front() - 1e-9 || cfg.valid_end > fitted.times.back() + 1e-9) {
    throw ConfigError("predict: training and validation windows must lie inside the fitted time range [" +
                      std::to_string(fitted.times.front()) + ", " + std::to_string(fitted.times.back()) + "]");
  }
  Prediction p;
  p.latent.times = fitted.times;
  const auto names = detail::param_names(order);
  for (const auto& n : names) p.latent.columns.push_back(fitted.column(n));
  if (order == 1) {
    const double w0 = p.latent.columns[0].front();
    const double b0 = p.latent.columns[1].front();
    p.anchors = {w0, b0};
    p.latent.names = {"T_W", "T_B"};
    for (auto& v : p.latent.columns[0]) v = transform_slope(v, w0);
    for (auto& v : p.latent.columns[1]) v = transform_breakpoint(v, b0);
  } else {
    p.latent.names = names;
  }
  p.training = train_predictors(p.latent, cfg, parallel);

  const auto grid = TrainGrids::build(cfg).full;
  p.predicted.names = names;
  p.predicted.times = grid;
  p.predicted_latent.names = p.latent.names;
  p.predicted_latent.times = grid;
  for (std::size_t c = 0; c < names.size(); ++c) {
    auto y = extrapolate(p.training[c].weights, grid);
    p.predicted_latent.columns.push_back(y);
    if (order == 1) {
      for (auto& v : y) v = c == 0 ? restore_slope(v, p.anchors[0]) : restore_breakpoint(v, p.anchors[1]);
    }
    p.predicted.columns.push_back(std::move(y));
  }
  return p;
}

/// Densities exp(F(k, p(t))) above the cutoff, eps at or below it. Values of F
/// that fall under ln(eps) (possible for two-neuron parameters with a
/// negative slope) are treated as the cutoff.
template <std::size_t M>
DensitySeries reconstruct(const std::vector<ReluProfile<M>>& params, double dt, std::size_t n,
                          const TransformConfig& cfg) {
  DensitySeries s;
  s.n = n;
  s.dt = dt;
  s.data.resize(params.size() * n);
  const double floor = cfg.log_floor();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto row = s.row(i);
    for (std::size_t k = 1; k <= n; ++k) {
      const double f = std::max(params[i](static_cast<double>(k), floor), floor);
      row[k - 1] = density_from_log(f, cfg);
    }
  }
  return s;
}

/// Reconstructs every output_stride-th row of a predicted table whose rows are
/// spaced grid_dt apart starting at t = 0.
inline DensitySeries reconstruct_table(const ParamTable& predicted, int order, std::size_t output_stride,
                                       double grid_dt, std::size_t n, const TransformConfig& cfg) {
  detail::require_order(order);
  detail::require(output_stride >= 1 && n >= 1 && grid_dt > 0.0, "reconstruct: need stride >= 1, n >= 1, dt > 0");
  if (predicted.rows() == 0 || !detail::same_time(predicted.times.front(), 0.0)) {
    throw ConfigError("reconstruct: predicted parameters must start at t = 0");
  }
  const auto names = detail::param_names(order);
  std::vector<const std::vector<double>*> cols;
  for (const auto& nm : names) cols.push_back(&predicted.column(nm));
  auto gather = [&]<std::size_t M>() {
    std::vector<ReluProfile<M>> rows;
    for (std::size_t i = 0; i < predicted.rows(); i += output_stride) {
      if (!detail::same_time(predicted.times[i], static_cast<double>(i) * grid_dt)) {
        throw ConfigError("reconstruct: predicted rows are not spaced by dt = " + std::to_string(grid_dt));
      }
      std::array<double, 2 * M> a{};
      for (std::size_t c = 0; c < 2 * M; ++c) a[c] = (*cols[c])[i];
      rows.push_back(ReluProfile<M>::from_array(a));
    }
    return reconstruct<M>(rows, grid_dt * static_cast<double>(output_stride), n, cfg);
  };
  return order == 1 ? gather.template operator()<1>() : gather.template operator()<2>();
}

/// compare() on t > tau, plus breakpoint and linear-segment errors when the
/// predicted table carries a one-neuron breakpoint column "B".
inline ComparisonMetrics evaluate_prediction(const DensitySeries& recon, const DensitySeries& ref,
                                             const TransformConfig& cfg, double tau, const FitConfig& fit,
                                             double fit_start, const ParamTable* predicted) {
  auto m = compare(recon, ref, cfg, tau);
  if (m.empty() || !predicted) return m;
  const bool has_b = std::find(predicted->names.begin(), predicted->names.end(), "B") != predicted->names.end();
  if (!has_b) return m;
  const auto& bp = predicted->column("B");
  // Breakpoints fitted directly from the reference over the compared rows.
  const auto ref_traj = fit_trajectory<1>(ref, 1, cfg, fit, std::min(fit_start, m.times.front()));
  for (std::size_t r = 0; r < m.times.size(); ++r) {
    const double t = m.times[r];
    const auto it = std::find_if(ref_traj.times.begin(), ref_traj.times.end(),
                                 [&](double x) { return detail::same_time(x, t); });
    const auto pt = std::find_if(predicted->times.begin(), predicted->times.end(),
                                 [&](double x) { return detail::same_time(x, t); });
    if (it == ref_traj.times.end() || pt == predicted->times.end()) {
      throw ConfigError("evaluate: no breakpoint available at t = " + std::to_string(t));
    }
    const double b_ref = ref_traj.params[static_cast<std::size_t>(it - ref_traj.times.begin())].b[0];
    m.breakpoint_ref.push_back(b_ref);
    m.breakpoint_pred.push_back(bp[static_cast<std::size_t>(pt - predicted->times.begin())]);
    const double last_d = std::min(static_cast<double>(m.n), std::ceil(b_ref) - 1.0);
    const auto last = last_d > 0.0 ? static_cast<std::size_t>(last_d) : std::size_t{0};
    double sq = 0.0;
    for (std::size_t k = 1; k <= last; ++k) sq += m.error(r, k) * m.error(r, k);
    m.segment_rmse.push_back(last ? std::sqrt(sq / static_cast<double>(last)) : 0.0);
  }
  return m;
}

/// Reference run over [0, T] stored at the spacing of the reconstructed series.
inline SolverConfig reference_storage(const SolverConfig& reference, double output_dt) {
  SolverConfig rc = reference;
  const double ratio = output_dt / rc.dt;
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio) {
    throw ConfigError("reference dt must divide the output spacing");
  }
  rc.store_stride = stride;
  return rc;
}

/// `external`, when given, replaces the precalculation integration (e.g. a
/// solution read from disk); its dt must equal precalc.dt.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const DensitySeries* external = nullptr) {
  detail::run_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  PipelineResult res;
  {
    detail::StageClock clock;
    res.precalc = detail::run_stage("precalculation", [&] {
      if (external) {
        if (std::abs(external->dt - cfg.precalc.dt) > 1e-12 * cfg.precalc.dt) {
          throw ConfigError("supplied solution has dt " + std::to_string(external->dt) + ", expected " +
                            std::to_string(cfg.precalc.dt));
        }
        return *external;
      }
      return integrate(cfg.precalc, cfg.kernel, monodisperse(cfg.precalc.n));
    });
    res.timings.precalculation = clock.seconds();
  }
  {
    detail::StageClock clock;
    res.fitted = detail::run_stage("retrieving", [&] {
      return retrieve(res.precalc, cfg.family_order, cfg.stride, cfg.transform, cfg.fit, cfg.fit_start);
    });
    res.timings.retrieving = clock.seconds();
  }
  {
    detail::StageClock clock;
    auto p = detail::run_stage("prediction", [&] {
      return predict_parameters(res.fitted, cfg.family_order, cfg.train, cfg.parallel_training);
    });
    res.latent = std::move(p.latent);
    res.predicted = std::move(p.predicted);
    res.predicted_latent = std::move(p.predicted_latent);
    res.anchors = std::move(p.anchors);
    res.training = std::move(p.training);
    res.timings.prediction = clock.seconds();
  }
  const std::size_t n_out = cfg.output_n ? cfg.output_n : (cfg.reference ? cfg.reference->n : cfg.precalc.n);
  {
    detail::StageClock clock;
    res.reconstructed = detail::run_stage("reconstruction", [&] {
      return reconstruct_table(res.predicted, cfg.family_order, cfg.output_stride, cfg.train.grid_dt, n_out,
                               cfg.transform);
    });
    res.timings.reconstruction = clock.seconds();
  }
  if (cfg.reference) {
    detail::StageClock clock;
    res.reference = detail::run_stage("reference", [&] {
      const auto rc = reference_storage(*cfg.reference, res.reconstructed.dt);
      return integrate(rc, cfg.kernel, monodisperse(rc.n));
    });
    res.timings.reference = clock.seconds();
    res.metrics = detail::run_stage("compare", [&] {
      return evaluate_prediction(res.reconstructed, *res.reference, cfg.transform, cfg.tau(), cfg.fit,
                                 cfg.fit_start, &res.predicted);
    });
  }
  return res;
}

inline void write_metrics_csv(const ComparisonMetrics& m, std::ostream& os) {
  os << "t,rmse,max_abs_error,mass_pred,mass_ref";
  const bool bp = !m.breakpoint_ref.empty();
  if (bp) os << ",breakpoint_pred,breakpoint_ref,segment_rmse";
  os << '\n';
  char buf[32];
  auto put = [&](double v, bool comma = true) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (comma) os << ',';
    os << buf;
  };
  for (std::size_t r = 0; r < m.times.size(); ++r) {
    double mx = 0.0;
    for (std::size_t k = 1; k <= m.n; ++k) mx = std::max(mx, m.error(r, k));
    put(m.times[r], false);
    put(m.row_rmse[r]);
    put(mx);
    put(m.mass_pred[r]);
    put(m.mass_ref[r]);
    if (bp) {
      put(m.breakpoint_pred[r]);
      put(m.breakpoint_ref[r]);
      put(m.segment_rmse[r]);
    }
    os << '\n';
  }
}

inline void write_metrics_summary_csv(const ComparisonMetrics& m, std::ostream& os) {
  char buf[64];
  os << "key,value\n";
  os << "rows," << m.times.size() << '\n';
  os << "cells_above_cutoff," << m.cells << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", m.rmse);
  os << "rmse," << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", m.max_mass_rel_error);
  os << "max_mass_rel_error," << buf << '\n';
}

inline void write_timing_csv(const StageTimings& t, std::ostream& os) {
  char buf[128];
  os << "stage,seconds\n";
  for (const auto& [name, v] : {std::pair{"precalculation", t.precalculation}, {"retrieving", t.retrieving},
                                {"prediction", t.prediction}, {"reconstruction", t.reconstruction},
                                {"reference", t.reference}}) {
    std::snprintf(buf, sizeof buf, "%s,%.6f\n", name, v);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Scaling benchmark

struct BenchRow {
  std::string kernel;
  std::size_t n = 0;
  double direct_rhs = 0.0;  // seconds per evaluation
  double fast_rhs = 0.0;
  double precalculation = 0.0;
  double retrieving = 0.0;
  double prediction = 0.0;
};

struct BenchConfig {
  std::size_t steps = 200;       // N_T of the precalculation
  double dt = 0.01;
  std::size_t stride = 20;
  std::size_t predict_epochs = 300;
  double min_seconds = 0.05;     // repeat each RHS until this much time has elapsed
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double direct_slope = 0.0;  // log-log slope of direct RHS time vs N, all kernels pooled
  double fast_slope = 0.0;
  double prediction_spread = 0.0;  // max / min prediction time
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

namespace detail {

template <class F>
double time_per_call(F&& f, double min_seconds) {
  // Best of three batches, each long enough to swamp timer resolution.
  double best = std::numeric_limits<double>::infinity();
  for (int batch = 0; batch < 3; ++batch) {
    std::size_t calls = 0;
    StageClock clock;
    do {
      f();
      ++calls;
    } while (clock.seconds() < min_seconds / 3.0);
    best = std::min(best, clock.seconds() / static_cast<double>(calls));
  }
  return best;
}

}  // namespace detail

inline BenchReport bench_scaling(const std::vector<KernelSpec>& kernels, const std::vector<std::size_t>& sizes,
                                 const BenchConfig& bc) {
  detail::require(std::is_sorted(sizes.begin(), sizes.end()), "bench: sizes must be sorted ascending");
  detail::require(!sizes.empty() && !kernels.empty(), "bench: need at least one kernel and one size");
  BenchReport rep;
  std::vector<double> xs, yd, yf;
  double pmin = std::numeric_limits<double>::infinity(), pmax = 0.0;
  for (const auto& kernel : kernels) {
    for (auto n : sizes) {
      BenchRow row;
      row.kernel = to_string(kernel);
      row.n = n;
      // Smooth, positive state resembling an aggregating distribution.
      std::vector<double> state(n), out(n);
      for (std::size_t k = 0; k < n; ++k) state[k] = std::exp(-static_cast<double>(k) / (0.1 * static_cast<double>(n)));
      row.direct_rhs = detail::time_per_call([&] { rhs_direct(state, kernel, true, out); }, bc.min_seconds);
      FastRhs fast(factorize(kernel, n));
      row.fast_rhs = detail::time_per_call([&] { fast(state, true, out); }, bc.min_seconds);

      PipelineConfig pc;
      pc.kernel = kernel;
      pc.precalc = SolverConfig{n, bc.dt, bc.steps, Method::RK4, true, RhsMode::Fast, 1};
      const double tau = pc.tau();
      pc.stride = bc.stride;
      pc.fit_start = 0.5 * tau;
      pc.train.train_begin = 0.5 * tau;
      pc.train.train_end = 0.9 * tau;
      pc.train.valid_end = tau;
      pc.train.horizon = 2.0 * tau;
      pc.train.grid_dt = bc.dt;
      pc.train.max_epochs = bc.predict_epochs;
      pc.train.stop_tol = 0.0;  // fixed epoch budget
      pc.train.seed = bc.seed;
      pc.output_stride = bc.steps;
      pc.output_n = 1;
      pc.parallel_training = false;
      const auto res = run_pipeline(pc);
      row.precalculation = res.timings.precalculation;
      row.retrieving = res.timings.retrieving;
      row.prediction = res.timings.prediction;
      pmin = std::min(pmin, row.prediction);
      pmax = std::max(pmax, row.prediction);
      xs.push_back(static_cast<double>(n));
      yd.push_back(row.direct_rhs);
      yf.push_back(row.fast_rhs);
      rep.rows.push_back(row);
    }
  }
  // Per-kernel slopes averaged over kernels.
  const std::size_t per = sizes.size();
  double sd = 0, sf = 0;
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    std::vector<double> x(xs.begin() + k * per, xs.begin() + (k + 1) * per);
    std::vector<double> d(yd.begin() + k * per, yd.begin() + (k + 1) * per);
    std::vector<double> f(yf.begin() + k * per, yf.begin() + (k + 1) * per);
    sd += loglog_slope(x, d);
    sf += loglog_slope(x, f);
  }
  rep.direct_slope = sd / static_cast<double>(kernels.size());
  rep.fast_slope = sf / static_cast<double>(kernels.size());
  rep.prediction_spread = pmin > 0 ? pmax / pmin : 0.0;
  return rep;
}

inline void write_bench_csv(const BenchReport& rep, std::ostream& os) {
  os << "kernel,n,direct_rhs,fast_rhs,precalculation,retrieving,prediction\n";
  char buf[256];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6e,%.6e,%.6e,%.6e,%.6e\n", r.kernel.c_str(), r.n, r.direct_rhs,
                  r.fast_rhs, r.precalculation, r.retrieving, r.prediction);
    os << buf;
  }
}

inline void write_bench_summary_csv(const BenchReport& rep, std::ostream& os) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "key,value\ndirect_slope,%.6f\nfast_slope,%.6f\nprediction_spread,%.6f\n",
                rep.direct_slope, rep.fast_slope, rep.prediction_spread);
  os << buf;
}

}  // namespace smolnn

#endif  // SMOLNN_PIPELINE_HPP_
