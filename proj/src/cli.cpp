#include "sppnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "sppnet/cascade.hpp"
#include "sppnet/dataset.hpp"
#include "sppnet/errors.hpp"
#include "sppnet/model_io.hpp"
#include "sppnet/pipeline.hpp"

namespace sppnet::cli {
namespace {

namespace fs = std::filesystem;
using detail::format_double;
using Provenance = std::vector<std::pair<std::string, std::string>>;

// Bad flag values or config entries.
class UsageError : public Error {
public:
  using Error::Error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct GenOptions {
  std::vector<double> thickness{36, 42, 48, 54, 60, 72, 84, 96, 128};
  double lambda_min = 400.0;
  double lambda_max = 700.0;
  int n_lambda = 101;
  double eps_d = 1.0;
  std::string parity = "antisymmetric";
  std::string permittivity_table;
  double max_failure = 0.10;
};

struct TrainOptions {
  std::string data;
  std::string mode = "sequential";
  int epochs = 400;
  double learning_rate = 0.05;
  int warmup = 1;
  double percentile = 0.9;
  double mse_goal = 0.0;
  double train_fraction = 0.8;
  double init_scale = 0.5;
  std::size_t queue_capacity = 64;
  long stall_timeout_ms = 10000;
  std::size_t min_window = 4;
  std::size_t max_window = 64;
  std::size_t target_window = 32;
  double min_sigma = 0.05;
  std::size_t validation_component = 0;
  bool timeline = false;
  bool no_trace = false;
};

struct EvalOptions {
  std::string model;
  std::string data;
};

struct BenchOptions {
  std::string data;
  int epochs = 10;
  double learning_rate = 0.05;
  double init_scale = 0.5;
  std::size_t queue_capacity = 64;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "flat key=value file; flags given on the command line win");
  sub->add_option("--seed", c.seed, "seed for splitting and weight initialization")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "directory for output artifacts")->capture_default_str();
}

fs::path prepare_out_dir(const Common& c) {
  const fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_provenance(std::ostream& out, const Provenance& p) {
  for (const auto& [k, v] : p) out << "# " << k << '=' << v << '\n';
}

void close_checked(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
std::string str(const T& v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    std::ostringstream ss;
    ss << v;
    return ss.str();
  }
}

omega::WindowLimits window_limits(const TrainOptions& o) {
  omega::WindowLimits lim;
  lim.min_delta_tau = o.min_window;
  lim.max_delta_tau = o.max_window;
  lim.target_delta_tau = o.target_window;
  lim.min_sigma = o.min_sigma;
  lim.component = o.validation_component;
  try {
    lim.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return lim;
}

Provenance train_provenance(const Common& c, const TrainOptions& o) {
  return {{"command", "train"},
          {"seed", str(c.seed)},
          {"data", o.data},
          {"mode", o.mode},
          {"epochs", str(o.epochs)},
          {"learning-rate", str(o.learning_rate)},
          {"warmup", str(o.warmup)},
          {"percentile", str(o.percentile)},
          {"mse-goal", str(o.mse_goal)},
          {"train-fraction", str(o.train_fraction)},
          {"init-scale", str(o.init_scale)},
          {"queue-capacity", str(o.queue_capacity)},
          {"stall-timeout-ms", str(o.stall_timeout_ms)},
          {"min-window", str(o.min_window)},
          {"max-window", str(o.max_window)},
          {"target-window", str(o.target_window)},
          {"min-sigma", str(o.min_sigma)},
          {"validation-component", str(o.validation_component)}};
}

data::Dataset load_raw(const std::string& path) {
  auto ds = data::load_csv(path);
  if (ds.normalized()) ds = data::denormalize(ds);
  return ds;
}

int cmd_gen_data(const Common& c, const GenOptions& o, std::ostream& out) {
  physics::PhysicsConfig phys;
  data::GridSpec grid;
  try {
    phys.eps_d = o.eps_d;
    phys.parity = physics::parse_parity(o.parity);
    grid.thicknesses_nm = o.thickness;
    grid.lambda_min_nm = o.lambda_min;
    grid.lambda_max_nm = o.lambda_max;
    grid.n_lambda = o.n_lambda;
    grid.max_failure_fraction = o.max_failure;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!o.permittivity_table.empty()) phys.table = physics::PermittivityTable::load_csv(o.permittivity_table);

  data::GridResult result;
  try {
    result = data::generate_grid(grid, phys);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  std::ostringstream thick;
  for (std::size_t i = 0; i < o.thickness.size(); ++i) thick << (i ? ";" : "") << str(o.thickness[i]);
  Provenance prov = {{"command", "gen-data"},
                     {"seed", str(c.seed)},
                     {"thickness", thick.str()},
                     {"lambda-min", str(o.lambda_min)},
                     {"lambda-max", str(o.lambda_max)},
                     {"n-lambda", str(o.n_lambda)},
                     {"eps-d", str(o.eps_d)},
                     {"parity", o.parity},
                     {"permittivity-table", o.permittivity_table.empty() ? "drude-molybdenum" : o.permittivity_table},
                     {"max-failure", str(o.max_failure)}};
  result.dataset.provenance = prov;

  const auto dir = prepare_out_dir(c);
  data::save_csv(result.dataset, dir / "dataset.csv");
  {
    const auto path = dir / "exclusions.csv";
    auto f = open_out(path);
    write_provenance(f, prov);
    data::write_exclusions(result.exclusions, f);
    close_checked(f, path);
  }
  out << "samples=" << result.dataset.size() << " excluded=" << result.exclusions.size() << '\n';
  return kSuccess;
}

pipeline::PipelineConfig pipeline_config(const Common& c, const TrainOptions& o) {
  pipeline::PipelineConfig cfg;
  cfg.queue_capacity = o.queue_capacity;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.warmup_epochs = o.warmup;
  cfg.percentile = o.percentile;
  cfg.mse_goal = o.mse_goal;
  cfg.seed = c.seed;
  cfg.stall_timeout = std::chrono::milliseconds(o.stall_timeout_ms);
  cfg.record_timeline = o.timeline;
  cfg.record_trace = !o.no_trace;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int cmd_train(const Common& c, const TrainOptions& o, std::ostream& out) {
  if (o.mode != "sequential" && o.mode != "parallel") throw UsageError("--mode must be sequential or parallel");
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) throw UsageError("--train-fraction must be in (0, 1)");
  if (!(o.init_scale > 0.0)) throw UsageError("--init-scale must be positive");
  const auto cfg = pipeline_config(c, o);
  const auto limits = window_limits(o);

  const auto raw = load_raw(o.data);
  auto [train_raw, test_raw] = data::split(raw, o.train_fraction, c.seed);
  const auto norm = data::fit_normalization(train_raw);
  const auto train = data::normalize_with(train_raw, norm);

  auto net = cascade::CascadeNet::create(c.seed, o.init_scale, limits);
  const auto result =
      o.mode == "parallel" ? pipeline::run_parallel(train, std::move(net), cfg) : pipeline::run_sequential(train, std::move(net), cfg);

  const auto prov = train_provenance(c, o);
  const auto dir = prepare_out_dir(c);
  cascade::ModelFile model{result.net, result.region, norm, prov};
  cascade::save_model(model, dir / "model.txt");

  auto write_file = [&](const char* name, auto&& body) {
    const auto path = dir / name;
    auto f = open_out(path);
    write_provenance(f, prov);
    body(f);
    close_checked(f, path);
  };
  write_file("metrics.csv", [&](std::ostream& f) { pipeline::write_metrics_csv(result.metrics, f); });
  if (cfg.record_trace) {
    write_file("validation_trace.csv", [&](std::ostream& f) { pipeline::write_trace_csv(result.trace, f); });
  }
  if (cfg.record_timeline) {
    write_file("timeline.csv", [&](std::ostream& f) { pipeline::write_timeline_csv(result.timeline, f); });
  }
  train_raw.provenance = prov;
  train_raw.provenance.emplace_back("split", "train");
  test_raw.provenance = prov;
  test_raw.provenance.emplace_back("split", "test");
  data::save_csv(train_raw, dir / "train.csv");
  data::save_csv(test_raw, dir / "test.csv");

  const auto& m = result.metrics;
  out << "epochs=" << m.epochs.size() << " samples=" << train.size();
  if (!m.epochs.empty()) {
    out << " first_mse=" << format_double(m.epochs.front().mse) << " last_mse=" << format_double(m.epochs.back().mse);
  }
  out << " final_mse=" << format_double(m.final_mse) << " stage2_updates=" << m.total_stage2_updates
      << " accepted=" << m.total_accepted << (m.goal_reached ? " goal=reached" : "") << '\n';
  return kSuccess;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

int cmd_eval(const Common& c, const EvalOptions& o, std::ostream& out) {
  const auto model = cascade::load_model(o.model);
  if (!model.normalization) throw UsageError("model file carries no normalization");
  auto ds = data::load_csv(o.data);
  if (ds.normalized()) {
    if (*ds.normalization != *model.normalization) {
      throw UsageError("dataset normalization does not match the model's normalization");
    }
    ds = data::denormalize(ds);
  }
  const auto normalized = data::normalize_with(ds, *model.normalization);
  const auto ev = pipeline::evaluate(model.net, model.region, normalized);

  const auto& norm = *model.normalization;
  std::vector<double> rel_lambda;
  const auto dir = prepare_out_dir(c);
  const auto path = dir / "predictions.csv";
  auto f = open_out(path);
  Provenance prov = {{"command", "eval"}, {"seed", str(c.seed)}, {"model", o.model}, {"data", o.data}};
  for (const auto& [k, v] : model.provenance) prov.emplace_back("model." + k, v);
  write_provenance(f, prov);
  f << "lambda0_nm,t_nm,lambda_spp_true,lambda_spp_pred,L_spp_true,L_spp_pred,rejected_flag\n";
  for (const auto& p : ev.predictions) {
    const auto& s = ds.samples[p.index];
    const double lam = norm.inverse(data::kLambdaSpp, p.output[0]);
    const double len = p.rejected ? std::nan("") : norm.inverse(data::kLength, p.output[1]);
    rel_lambda.push_back(std::abs(lam - s.lambda_spp_nm) / std::abs(s.lambda_spp_nm));
    f << format_double(s.lambda0_nm) << ',' << format_double(s.t_nm) << ',' << format_double(s.lambda_spp_nm) << ','
      << format_double(lam) << ',' << format_double(s.L_spp_nm) << ',' << format_double(len) << ','
      << (p.rejected ? 1 : 0) << '\n';
  }
  close_checked(f, path);
  out << "samples=" << ev.predictions.size() << " mse=" << format_double(ev.mse)
      << " max_rel_err_lambda_spp=" << format_double(*std::max_element(rel_lambda.begin(), rel_lambda.end()))
      << " median_rel_err_lambda_spp=" << format_double(median(rel_lambda)) << " rejected=" << ev.rejected << '\n';
  return kSuccess;
}

int cmd_bench(const Common& c, const BenchOptions& o, std::ostream& out, std::ostream& err) {
  const unsigned threads = std::thread::hardware_concurrency();
  if (threads < 2) {
    err << "warning: " << threads << " hardware thread(s); parallel timings are not meaningful on this host\n";
  }
  if (!(o.init_scale > 0.0)) throw UsageError("--init-scale must be positive");
  const auto train = data::normalize(load_raw(o.data));
  pipeline::PipelineConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.queue_capacity = o.queue_capacity;
  cfg.seed = c.seed;
  cfg.record_trace = false;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const auto net = cascade::CascadeNet::create(c.seed, o.init_scale);

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto seq = pipeline::run_sequential(train, net, cfg);
  const auto t1 = Clock::now();
  auto pcfg = cfg;
  pcfg.record_timeline = true;
  const auto par = pipeline::run_parallel(train, net, pcfg);
  const auto t2 = Clock::now();

  const double seq_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  const double par_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  const auto a = seq.net.flatten();
  const auto b = par.net.flatten();
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
  double overlap = 0.0;
  std::size_t samples = 0;
  for (const auto& m : par.metrics.epochs) {
    overlap += m.overlap_ratio * static_cast<double>(m.samples);
    samples += m.samples;
  }
  overlap = samples ? overlap / static_cast<double>(samples) : 0.0;

  Provenance prov = {{"command", "bench"},
                     {"seed", str(c.seed)},
                     {"data", o.data},
                     {"epochs", str(o.epochs)},
                     {"learning-rate", str(o.learning_rate)},
                     {"init-scale", str(o.init_scale)},
                     {"queue-capacity", str(o.queue_capacity)}};
  const auto dir = prepare_out_dir(c);
  {
    const auto path = dir / "timeline.csv";
    auto f = open_out(path);
    write_provenance(f, prov);
    pipeline::write_timeline_csv(par.timeline, f);
    close_checked(f, path);
  }
  std::ostringstream report;
  report << "sppnet bench report v1\n";
  write_provenance(report, prov);
  report << "metric,value\n"
         << "hardware_threads," << threads << '\n'
         << "samples," << train.size() << '\n'
         << "epochs," << par.metrics.epochs.size() << '\n'
         << "sequential_wall_ms," << format_double(seq_ms) << '\n'
         << "parallel_wall_ms," << format_double(par_ms) << '\n'
         << "speedup," << format_double(par_ms > 0.0 ? seq_ms / par_ms : 0.0) << '\n'
         << "overlap_ratio," << format_double(overlap) << '\n'
         << "max_weight_diff," << format_double(max_diff) << '\n'
         << "equivalent," << (max_diff <= 1e-12 ? 1 : 0) << '\n';
  {
    const auto path = dir / "bench_report.csv";
    auto f = open_out(path);
    f << report.str();
    close_checked(f, path);
  }
  out << report.str();
  return max_diff <= 1e-12 ? kSuccess : kDivergence;
}

// Turns config-file entries into flags for the chosen subcommand, skipping
// any flag the command line already sets.
std::vector<std::string> inject_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string config_path;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (sub_pos == args.size() && !args[i].empty() && args[i][0] != '-') sub_pos = i;
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty() || sub_pos == args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_pos]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config(config_path)) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt || key == "config") throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
    if (given(flag)) continue;
    injected.push_back(flag + "=" + value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::size_t> index;
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key(detail::trim(t.substr(0, eq)));
    std::string value(detail::trim(t.substr(eq + 1)));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    if (auto it = index.find(key); it != index.end()) {
      out[it->second].second = value;
    } else {
      index.emplace(key, out.size());
      out.emplace_back(std::move(key), std::move(value));
    }
  }
  return out;
}

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surface plasmon polariton dataset generation and cascade network training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common gen_common, train_common, eval_common, bench_common;
  GenOptions gen;
  TrainOptions tr;
  EvalOptions ev;
  BenchOptions be;

  auto* g = app.add_subcommand("gen-data", "sample the thickness x wavelength grid");
  add_common(g, gen_common);
  g->add_option("--thickness", gen.thickness, "film thicknesses in nm")->delimiter(',')->capture_default_str();
  g->add_option("--lambda-min", gen.lambda_min, "first wavelength, nm")->capture_default_str();
  g->add_option("--lambda-max", gen.lambda_max, "last wavelength, nm")->capture_default_str();
  g->add_option("--n-lambda", gen.n_lambda, "wavelengths per thickness")->capture_default_str();
  g->add_option("--eps-d", gen.eps_d, "cladding permittivity")->capture_default_str();
  g->add_option("--parity", gen.parity, "antisymmetric (long-range) or symmetric (short-range)")
      ->capture_default_str();
  g->add_option("--permittivity-table", gen.permittivity_table, "CSV lambda_nm,eps_real,eps_imag replacing the Drude fit");
  g->add_option("--max-failure", gen.max_failure, "allowed fraction of failed grid points")->capture_default_str();

  auto* t = app.add_subcommand("train", "train the cascade network");
  add_common(t, train_common);
  t->add_option("--data", tr.data, "dataset CSV")->required();
  t->add_option("--mode", tr.mode, "sequential or parallel")->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--learning-rate", tr.learning_rate)->capture_default_str();
  t->add_option("--warmup", tr.warmup, "epochs that accept everything while calibrating")->capture_default_str();
  t->add_option("--percentile", tr.percentile, "warm-up quantile used as the acceptance region")
      ->capture_default_str();
  t->add_option("--mse-goal", tr.mse_goal, "stop once an epoch's MSE is at or below this")->capture_default_str();
  t->add_option("--train-fraction", tr.train_fraction)->capture_default_str();
  t->add_option("--init-scale", tr.init_scale)->capture_default_str();
  t->add_option("--queue-capacity", tr.queue_capacity)->capture_default_str();
  t->add_option("--stall-timeout-ms", tr.stall_timeout_ms)->capture_default_str();
  t->add_option("--min-window", tr.min_window)->capture_default_str();
  t->add_option("--max-window", tr.max_window)->capture_default_str();
  t->add_option("--target-window", tr.target_window)->capture_default_str();
  t->add_option("--min-sigma", tr.min_sigma)->capture_default_str();
  t->add_option("--validation-component", tr.validation_component, "IVa output fed to the validator")
      ->capture_default_str();
  t->add_flag("--timeline", tr.timeline, "write timeline.csv");
  t->add_flag("--no-trace", tr.no_trace, "skip validation_trace.csv");

  auto* e = app.add_subcommand("eval", "run a trained model on a dataset");
  add_common(e, eval_common);
  e->add_option("--model", ev.model, "model file")->required();
  e->add_option("--data", ev.data, "dataset CSV")->required();

  auto* b = app.add_subcommand("bench", "time sequential against parallel training");
  add_common(b, bench_common);
  b->add_option("--data", be.data, "dataset CSV")->required();
  b->add_option("--epochs", be.epochs)->capture_default_str();
  b->add_option("--learning-rate", be.learning_rate)->capture_default_str();
  b->add_option("--init-scale", be.init_scale)->capture_default_str();
  b->add_option("--queue-capacity", be.queue_capacity)->capture_default_str();

  try {
    auto args = inject_config(args_in, app);
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kSuccess;
    } catch (const CLI::ParseError& pe) {
      err << "error: " << pe.what() << '\n';
      return kUsage;
    }
    if (g->parsed()) return cmd_gen_data(gen_common, gen, out);
    if (t->parsed()) return cmd_train(train_common, tr, out);
    if (e->parsed()) return cmd_eval(eval_common, ev, out);
    if (b->parsed()) return cmd_bench(bench_common, be, out, err);
    return kUsage;
  } catch (const DivergenceError& ex) {
    err << "diverged: " << ex.what() << '\n';
    return kDivergence;
  } catch (const IoError& ex) {
    err << "I/O error: " << ex.what() << '\n';
    return kIoError;
  } catch (const ParseError& ex) {
    err << "malformed input: " << ex.what() << '\n';
    return kIoError;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sppnet::cli
