// smolnn command-line entry point: one subcommand per pipeline stage plus the
// end-to-end run. Exit codes: 0 ok, 2 configuration or I/O error, 3 numerical
// failure, 1 anything else.

#include <fftw3.h>
#include <gsl/gsl_version.h>
#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smolnn/pipeline.hpp"
#include "smolnn/series_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Options

struct Common {
  std::string config;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  double eps = 1e-7;
};

struct SolveOpts {
  std::string kernel = "const";
  std::size_t n = 0;
  double dt = 0.0;
  std::size_t steps = 0;
  std::string method = "rk4";
  bool source = false;
  std::string rhs = "fast";
};

struct FitOpts {
  std::size_t stride = 20;
  int family = 1;
  std::string method = "adam";
  std::size_t iterations = 2000;
  double fit_start = 0.0;
};

struct PredictOpts {
  std::vector<double> train_window;
  std::vector<double> valid_window;
  double horizon = 0.0;
  double c1 = 1.0, c2 = 1.0, c3 = 1.0;
  std::size_t max_epochs = 20000;
  double stop_tol = 1e-6;
  std::size_t hidden = 5;
  double time_scale = 1.0;
  bool serial = false;
};

struct ReconOpts {
  std::size_t output_stride = 20;
  std::size_t output_n = 0;
  std::size_t n_ref = 0;
};

std::string both(const std::string& name) {
  // Hyphenated flag plus its underscore spelling, which is the config-file key.
  std::string under = name;
  for (auto& ch : under) {
    if (ch == '-') ch = '_';
  }
  return under == name ? "--" + name : "--" + name + ",--" + under;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "flat key = value file; command-line flags override it")
      ->check(CLI::ExistingFile);
  app->add_option(both("out-dir"), c.out_dir, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "base random seed")->capture_default_str();
  app->add_option("--eps", c.eps, "density cutoff of the log transform")->capture_default_str();
}

void add_solver(CLI::App* app, SolveOpts& s) {
  app->add_option("--kernel", s.kernel, "const | product:<mu> | sum:<nu> | hom:<nu>:<mu>")->capture_default_str();
  app->add_option("--n", s.n, "number of equations N");
  app->add_option("--dt", s.dt, "time step");
  app->add_option("--steps", s.steps, "number of steps of the precalculation");
  app->add_option("--method", s.method, "rk4 | euler")->capture_default_str();
  app->add_flag("--source", s.source, "unit monomer source");
  app->add_option("--rhs", s.rhs, "fast | direct")->capture_default_str();
}

void add_fit(CLI::App* app, FitOpts& f) {
  app->add_option("--stride", f.stride, "fit every stride-th stored step")->capture_default_str();
  app->add_option("--family", f.family, "profile family order (1 or 2)")->capture_default_str();
  app->add_option(both("fit-method"), f.method, "adam | exact (exact: order 1 only)")->capture_default_str();
  app->add_option(both("fit-iterations"), f.iterations, "ADAM iterations per sample")->capture_default_str();
  app->add_option(both("fit-start"), f.fit_start, "first fitted time")->capture_default_str();
}

void add_predict(CLI::App* app, PredictOpts& p) {
  app->add_option(both("train-window"), p.train_window, "t_a t_b")->expected(2);
  app->add_option(both("valid-window"), p.valid_window, "t_b t_c")->expected(2);
  app->add_option("--horizon", p.horizon, "prediction horizon T");
  app->add_option("--c1", p.c1, "penalty on y' < 0")->capture_default_str();
  app->add_option("--c2", p.c2, "penalty on y'' > 0")->capture_default_str();
  app->add_option("--c3", p.c3, "penalty on y''' < 0")->capture_default_str();
  app->add_option(both("max-epochs"), p.max_epochs, "epoch budget per predictor")->capture_default_str();
  app->add_option(both("stop-tol"), p.stop_tol, "validation loss stopping threshold")->capture_default_str();
  app->add_option("--hidden", p.hidden, "hidden width")->capture_default_str();
  app->add_option(both("time-scale"), p.time_scale, "input scaling of the first layer (power of two)")
      ->capture_default_str();
  app->add_flag("--serial", p.serial, "train predictors one after another");
}

void add_recon(CLI::App* app, ReconOpts& r) {
  app->add_option(both("output-stride"), r.output_stride, "reconstructed rows every k grid steps")
      ->capture_default_str();
  app->add_option(both("output-n"), r.output_n, "sizes to reconstruct (default: n-ref, else n)");
  app->add_option(both("n-ref"), r.n_ref, "size of the reference run (0: none)")->capture_default_str();
}

smolnn::SolverConfig solver_config(const SolveOpts& s) {
  smolnn::SolverConfig c;
  c.n = s.n;
  c.dt = s.dt;
  c.steps = s.steps;
  if (s.method == "rk4") {
    c.method = smolnn::Method::RK4;
  } else if (s.method == "euler") {
    c.method = smolnn::Method::Euler;
  } else {
    throw smolnn::ConfigError("unknown method '" + s.method + "' (rk4 | euler)");
  }
  if (s.rhs == "fast") {
    c.rhs_mode = smolnn::RhsMode::Fast;
  } else if (s.rhs == "direct") {
    c.rhs_mode = smolnn::RhsMode::Direct;
  } else {
    throw smolnn::ConfigError("unknown rhs '" + s.rhs + "' (fast | direct)");
  }
  c.source = s.source;
  c.validate();
  return c;
}

smolnn::TransformConfig transform_config(const Common& c) {
  smolnn::TransformConfig t;
  t.eps = c.eps;
  t.validate();
  return t;
}

smolnn::FitConfig fit_config(const FitOpts& f) {
  smolnn::FitConfig c;
  if (f.method == "adam") {
    c.method = smolnn::FitMethod::Adam;
  } else if (f.method == "exact") {
    c.method = smolnn::FitMethod::Exact;
  } else {
    throw smolnn::ConfigError("unknown fit method '" + f.method + "' (adam | exact)");
  }
  c.iterations = f.iterations;
  c.validate();
  return c;
}

smolnn::TrainConfig train_config(const PredictOpts& p, double grid_dt, std::uint64_t seed) {
  if (p.train_window.size() != 2) throw smolnn::ConfigError("predict: --train-window t_a t_b is required");
  if (p.valid_window.size() != 2) throw smolnn::ConfigError("predict: --valid-window t_b t_c is required");
  if (p.valid_window[0] != p.train_window[1]) {
    throw smolnn::ConfigError("predict: validation window must start where the training window ends");
  }
  smolnn::TrainConfig c;
  c.train_begin = p.train_window[0];
  c.train_end = p.train_window[1];
  c.valid_end = p.valid_window[1];
  c.horizon = p.horizon;
  c.grid_dt = grid_dt;
  c.penalty = {p.c1, p.c2, p.c3};
  c.max_epochs = p.max_epochs;
  c.stop_tol = p.stop_tol;
  c.hidden = p.hidden;
  c.time_scale = p.time_scale;
  c.seed = seed;
  c.validate();
  return c;
}

std::size_t output_size(const ReconOpts& r, std::size_t n) {
  if (r.output_n) return r.output_n;
  if (r.n_ref) return r.n_ref;
  if (n) return n;
  throw smolnn::ConfigError("reconstruct: set --output-n, --n-ref or --n");
}

int family_of(const smolnn::ParamTable& t) {
  const auto has = [&](const char* name) {
    return std::find(t.names.begin(), t.names.end(), name) != t.names.end();
  };
  if (has("W") && has("B")) return 1;
  if (has("w1") && has("w2") && has("b1") && has("b2")) return 2;
  throw smolnn::IoError("parameter table has neither (W, B) nor (w1, w2, b1, b2) columns");
}

/// Fills options of `sub` that were not given on the command line from a flat
/// key = value file. Keys must name an option of some subcommand.
void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  const auto items = CLI::ConfigTOML().from_file(path);
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw smolnn::ConfigError(path + ": sections are not supported ('" + item.fullname() + "')");
    const std::string flag = "--" + item.name;
    bool known = false;
    for (const auto* other : app.get_subcommands({})) known = known || other->get_option_no_throw(flag) != nullptr;
    if (!known) throw smolnn::ConfigError(path + ": unknown key '" + item.name + "'");
    auto* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || opt->count() > 0 || flag == "--config") continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw smolnn::ConfigError(path + ": key '" + item.name + "': " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Files and manifest

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw smolnn::IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Session {
 public:
  Session(std::string command, const CLI::App* app, const Common& common)
      : command_(std::move(command)), out_dir_(common.out_dir), seed_(common.seed), started_(utc_now()) {
    config_ = app->config_to_str(true, false);
    fs::create_directories(out_dir_);
  }

  fs::path out(const std::string& name) const { return out_dir_ / name; }

  /// Resolves an input path: explicit value, else the default name under the output directory.
  fs::path input(const std::string& given, const std::string& fallback) {
    fs::path p = given.empty() ? out(fallback) : fs::path(given);
    if (!fs::exists(p)) throw smolnn::IoError("input file not found: " + p.string());
    inputs_[p.string()] = sha256_file(p);
    return p;
  }

  template <class F>
  void write_text(const std::string& name, F&& body) {
    const auto p = out(name);
    {
      std::ofstream os(p, std::ios::binary | std::ios::trunc);
      if (!os) throw smolnn::IoError("cannot write " + p.string());
      body(os);
      if (!os) throw smolnn::IoError("write failed: " + p.string());
    }
    outputs_.push_back(name);
  }

  void write_series(const std::string& name, const smolnn::DensitySeries& s) {
    smolnn::write_series(s, out(name));
    outputs_.push_back(name);
  }

  void finish() {
    const auto path = out("manifest.json");
    json m;
    if (fs::exists(path)) {
      std::ifstream is(path);
      m = json::parse(is, nullptr, false);
      if (m.is_discarded() || !m.is_object()) m = json::object();
    }
    m["artifact"] = {{"name", "smolnn"},
                     {"version", kVersion},
                     {"fftw", std::string(fftw_version)},
                     {"gsl", GSL_VERSION},
                     {"compiler", std::string(__VERSION__)}};
    json& files = m["files"];
    if (!files.is_object()) files = json::object();
    for (const auto& name : outputs_) {
      const auto p = out(name);
      files[name] = {{"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}, {"command", command_}};
    }
    json inputs = json::object();
    for (const auto& [p, h] : inputs_) inputs[p] = h;
    json run = {{"command", command_}, {"seed", seed_},     {"config", config_},
                {"inputs", inputs},     {"outputs", outputs_}, {"started_at", started_},
                {"finished_at", utc_now()}};
    if (!m["runs"].is_array()) m["runs"] = json::array();
    m["runs"].push_back(run);
    std::ofstream os(path, std::ios::trunc);
    os << m.dump(2) << '\n';
    if (!os) throw smolnn::IoError("cannot write " + path.string());
  }

 private:
  std::string command_;
  fs::path out_dir_;
  std::uint64_t seed_;
  std::string started_;
  std::string config_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

smolnn::ParamTable read_table(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw smolnn::IoError("cannot read " + p.string());
  return smolnn::read_table_csv(is, p.string());
}

void write_solve_summary(Session& s, const std::string& stem, const smolnn::DensitySeries& series) {
  const auto last = series.rows() - 1;
  const double m = smolnn::mass(series.row(last));
  const double tail = series.tail(last);
  char buf[160];
  std::snprintf(buf, sizeof buf, "key,value\nt_final,%.17g\nmass_final,%.17g\ntail_density,%.17g\n",
                series.time(last), m, tail);
  s.write_text(stem + "_summary.csv", [&](std::ostream& os) { os << buf; });
  std::printf("%s: t = %.6g, M = %.12g, c_N = %.6e\n", stem.c_str(), series.time(last), m, tail);
}

void write_prediction(Session& s, const smolnn::ParamTable& latent_pred, const smolnn::ParamTable& predicted,
                      const std::vector<smolnn::TrainResult>& training) {
  s.write_text("predicted_params.csv", [&](std::ostream& os) { smolnn::write_table_csv(predicted, os); });
  s.write_text("predicted_latent.csv", [&](std::ostream& os) { smolnn::write_table_csv(latent_pred, os); });
  for (std::size_t c = 0; c < training.size(); ++c) {
    const auto& name = latent_pred.names[c];
    s.write_text("train_report_" + name + ".csv",
                 [&](std::ostream& os) { smolnn::write_train_report_csv(training[c].report, os); });
    s.write_text("weights_" + name + ".csv",
                 [&](std::ostream& os) { smolnn::write_weights_csv(training[c].weights, os); });
  }
}

void write_metrics(Session& s, const smolnn::ComparisonMetrics& m) {
  s.write_text("metrics.csv", [&](std::ostream& os) { smolnn::write_metrics_csv(m, os); });
  s.write_text("metrics_summary.csv", [&](std::ostream& os) { smolnn::write_metrics_summary_csv(m, os); });
  std::printf("compare: %zu rows, rmse = %.6g, max mass rel. error = %.6g\n", m.times.size(), m.rmse,
              m.max_mass_rel_error);
  if (!m.breakpoint_ref.empty()) {
    std::printf("compare: at t = %.6g breakpoint pred %.6g vs ref %.6g, segment rmse %.6g\n", m.times.back(),
                m.breakpoint_pred.back(), m.breakpoint_ref.back(), m.segment_rmse.back());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Like std::vector CLI options but tolerant of a single comma-joined value.
std::vector<std::string> kernel_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    for (auto& x : split_list(r)) out.push_back(x);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smolnn: Smoluchowski solver with neural extrapolation of profile parameters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  SolveOpts solve;
  FitOpts fit;
  PredictOpts pred;
  ReconOpts recon;
  std::size_t store_stride = 1;
  std::vector<std::size_t> csv_sizes;
  std::string output, in_solution, in_params, in_predicted, in_recon, in_ref;
  double tau = -1.0;
  std::vector<std::string> bench_kernels{"const", "product:0.2", "sum:0.5", "hom:0.3:0.1"};
  std::vector<std::size_t> bench_sizes{512, 1024, 2048, 4096};
  std::size_t bench_steps = 200, bench_epochs = 300;

  auto* c_solve = app.add_subcommand("solve", "integrate the truncated system");
  add_common(c_solve, common);
  add_solver(c_solve, solve);
  c_solve->add_option(both("store-stride"), store_stride, "keep every k-th state")->capture_default_str();
  c_solve->add_option("--output", output, "file name under out-dir (default solution.smol)");
  c_solve->add_option(both("csv-sizes"), csv_sizes, "also write <stem>.csv with these sizes");

  auto* c_fit = app.add_subcommand("fit", "fit profile parameters to a stored solution");
  add_common(c_fit, common);
  add_fit(c_fit, fit);
  c_fit->add_option("--input", in_solution, "SMOL1 solution (default out-dir/solution.smol)");

  auto* c_pred = app.add_subcommand("predict", "train predictors on fitted parameters and extrapolate");
  add_common(c_pred, common);
  add_predict(c_pred, pred);
  c_pred->add_option("--dt", solve.dt, "prediction grid spacing");
  c_pred->add_option("--params", in_params, "fitted parameters (default out-dir/params.csv)");

  auto* c_recon = app.add_subcommand("reconstruct", "rebuild densities from predicted parameters");
  add_common(c_recon, common);
  add_recon(c_recon, recon);
  c_recon->add_option("--dt", solve.dt, "prediction grid spacing");
  c_recon->add_option("--n", solve.n, "precalculation size (fallback for the output size)");
  c_recon->add_option("--predicted", in_predicted, "predicted parameters (default out-dir/predicted_params.csv)");

  auto* c_cmp = app.add_subcommand("compare", "transformed-density errors against a reference run");
  add_common(c_cmp, common);
  c_cmp->add_option("--tau", tau, "compare rows with t > tau (default dt * steps)");
  c_cmp->add_option("--dt", solve.dt, "precalculation time step");
  c_cmp->add_option("--steps", solve.steps, "precalculation steps");
  c_cmp->add_option(both("fit-start"), fit.fit_start, "first fitted time")->capture_default_str();
  c_cmp->add_option(both("fit-iterations"), fit.iterations, "ADAM iterations per reference sample")
      ->capture_default_str();
  c_cmp->add_option("--reconstructed", in_recon, "default out-dir/reconstructed.smol");
  c_cmp->add_option("--reference", in_ref, "default out-dir/reference.smol");
  c_cmp->add_option("--predicted", in_predicted, "predicted parameters, for breakpoint errors");

  auto* c_bench = app.add_subcommand("bench", "stage timings and RHS scaling across N");
  add_common(c_bench, common);
  c_bench->add_option("--kernels", bench_kernels, "kernel list")->capture_default_str();
  c_bench->add_option("--sizes", bench_sizes, "ascending N values")->capture_default_str();
  c_bench->add_option(both("bench-steps"), bench_steps, "precalculation steps N_T")->capture_default_str();
  c_bench->add_option(both("bench-epochs"), bench_epochs, "training epochs per predictor")->capture_default_str();

  auto* c_run = app.add_subcommand("run", "end-to-end pipeline");
  add_common(c_run, common);
  add_solver(c_run, solve);
  add_fit(c_run, fit);
  add_predict(c_run, pred);
  add_recon(c_run, recon);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      if (!common.config.empty()) apply_config(app, sub, common.config);
    }
    const auto tcfg = transform_config(common);
    if (c_solve->parsed()) {
      Session s("solve", c_solve, common);
      auto cfg = solver_config(solve);
      cfg.store_stride = store_stride;
      const auto kernel = smolnn::parse_kernel(solve.kernel);
      const auto series = smolnn::integrate(cfg, kernel, smolnn::monodisperse(cfg.n));
      const std::string name = output.empty() ? "solution.smol" : output;
      const std::string stem = fs::path(name).stem().string();
      s.write_series(name, series);
      write_solve_summary(s, stem, series);
      if (!csv_sizes.empty()) {
        s.write_text(stem + ".csv", [&](std::ostream& os) { smolnn::write_series_csv(series, csv_sizes, os); });
      }
      s.finish();
    } else if (c_fit->parsed()) {
      Session s("fit", c_fit, common);
      const auto series = smolnn::read_series(s.input(in_solution, "solution.smol"));
      const auto table = smolnn::retrieve(series, fit.family, fit.stride, tcfg, fit_config(fit), fit.fit_start);
      s.write_text("params.csv", [&](std::ostream& os) { smolnn::write_table_csv(table, os); });
      std::printf("fit: %zu samples\n", table.rows());
      s.finish();
    } else if (c_pred->parsed()) {
      Session s("predict", c_pred, common);
      const auto table = read_table(s.input(in_params, "params.csv"));
      const auto tc = train_config(pred, solve.dt, common.seed);
      const auto p = smolnn::predict_parameters(table, family_of(table), tc, !pred.serial);
      write_prediction(s, p.predicted_latent, p.predicted, p.training);
      for (std::size_t c = 0; c < p.training.size(); ++c) {
        std::printf("predict %s: %zu epochs, returned epoch %zu\n", p.latent.names[c].c_str(),
                    p.training[c].report.epochs, p.training[c].report.returned_epoch);
      }
      s.finish();
    } else if (c_recon->parsed()) {
      Session s("reconstruct", c_recon, common);
      const auto table = read_table(s.input(in_predicted, "predicted_params.csv"));
      const auto series = smolnn::reconstruct_table(table, family_of(table), recon.output_stride, solve.dt,
                                                    output_size(recon, solve.n), tcfg);
      s.write_series("reconstructed.smol", series);
      s.finish();
    } else if (c_cmp->parsed()) {
      Session s("compare", c_cmp, common);
      const auto rec = smolnn::read_series(s.input(in_recon, "reconstructed.smol"));
      const auto ref = smolnn::read_series(s.input(in_ref, "reference.smol"));
      if (tau < 0.0) tau = solve.dt * static_cast<double>(solve.steps);
      std::optional<smolnn::ParamTable> table;
      const fs::path pp = in_predicted.empty() ? s.out("predicted_params.csv") : fs::path(in_predicted);
      if (!in_predicted.empty() || fs::exists(pp)) table = read_table(s.input(pp.string(), ""));
      const auto m = smolnn::evaluate_prediction(rec, ref, tcfg, tau, fit_config(fit), fit.fit_start,
                                                 table ? &*table : nullptr);
      write_metrics(s, m);
      s.finish();
    } else if (c_bench->parsed()) {
      Session s("bench", c_bench, common);
      std::vector<smolnn::KernelSpec> kernels;
      for (const auto& k : kernel_list(bench_kernels)) kernels.push_back(smolnn::parse_kernel(k));
      smolnn::BenchConfig bc;
      bc.steps = bench_steps;
      bc.predict_epochs = bench_epochs;
      bc.seed = common.seed;
      const auto rep = smolnn::bench_scaling(kernels, bench_sizes, bc);
      s.write_text("bench.csv", [&](std::ostream& os) { smolnn::write_bench_csv(rep, os); });
      s.write_text("bench_summary.csv", [&](std::ostream& os) { smolnn::write_bench_summary_csv(rep, os); });
      std::printf("bench: direct slope %.3f, fast slope %.3f, prediction spread %.3f\n", rep.direct_slope,
                  rep.fast_slope, rep.prediction_spread);
      s.finish();
    } else if (c_run->parsed()) {
      Session s("run", c_run, common);
      smolnn::PipelineConfig pc;
      pc.kernel = smolnn::parse_kernel(solve.kernel);
      pc.precalc = solver_config(solve);
      pc.transform = tcfg;
      pc.stride = fit.stride;
      pc.family_order = fit.family;
      pc.fit = fit_config(fit);
      pc.fit_start = fit.fit_start;
      pc.train = train_config(pred, solve.dt, common.seed);
      pc.output_stride = recon.output_stride;
      pc.output_n = output_size(recon, solve.n);
      pc.parallel_training = !pred.serial;
      if (recon.n_ref) {
        smolnn::SolverConfig rc = pc.precalc;
        rc.n = recon.n_ref;
        rc.steps = static_cast<std::size_t>(std::llround(pc.train.horizon / rc.dt));
        pc.reference = rc;
      }
      const auto res = smolnn::run_pipeline(pc);
      s.write_series("solution.smol", res.precalc);
      write_solve_summary(s, "solution", res.precalc);
      s.write_text("params.csv", [&](std::ostream& os) { smolnn::write_table_csv(res.fitted, os); });
      write_prediction(s, res.predicted_latent, res.predicted, res.training);
      s.write_series("reconstructed.smol", res.reconstructed);
      if (res.reference) {
        s.write_series("reference.smol", *res.reference);
        write_solve_summary(s, "reference", *res.reference);
        write_metrics(s, res.metrics);
      }
      s.write_text("timing.csv", [&](std::ostream& os) { smolnn::write_timing_csv(res.timings, os); });
      s.finish();
    }
  } catch (const smolnn::StageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.is_config_error() ? 2 : 3;
  } catch (const smolnn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const smolnn::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const smolnn::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
