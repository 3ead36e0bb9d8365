#include "aesindy/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "aesindy/continuation.hpp"
#include "aesindy/error.hpp"
#include "aesindy/integrator.hpp"
#include "aesindy/model_io.hpp"
#include "aesindy/oracles.hpp"

namespace aesindy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') throw DataError("bad number '" + item + "' in " + what);
    out.push_back(v);
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path);
}

void require_writable(const std::string& path) {
  const fs::path parent = fs::absolute(fs::path(path)).parent_path();
  if (!fs::is_directory(parent)) throw DataError("output directory does not exist: " + parent.string());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad value for '") + key + "': " + e.what());
  }
}

// ---- gen-data ----

struct GenOptions {
  std::string system;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw DataError("unknown gen-data config key '" + key + "'");
  }
}

int run_gen(const GenOptions& o) {
  json cfg = json::object();
  if (!o.config.empty()) {
    require_file(o.config, "config");
    cfg = read_json_file(o.config);
  }
  require_writable(o.out);
  const auto seed = o.seed ? *o.seed : value_or<std::uint64_t>(cfg, "seed", 0);
  const auto ambient = value_or<Eigen::Index>(cfg, "ambient_dim", 200);
  const double qscale = value_or(cfg, "quadratic_scale", 0.5);
  const double noise = value_or(cfg, "noise", 0.0);
  const LiftSpec lift = make_lift(ambient, 2, qscale, noise, seed);
  SnapshotSet set;
  if (o.system == "duffing") {
    check_keys(cfg, {"seed", "ambient_dim", "quadratic_scale", "noise", "omega0", "q", "gamma",
                     "forcing", "omegas", "t_end", "dt", "z0", "finite_difference"});
    DuffingConfig c;
    c.omega0 = value_or(cfg, "omega0", c.omega0);
    c.q = value_or(cfg, "q", c.q);
    c.gamma = value_or(cfg, "gamma", c.gamma);
    c.forcing = value_or(cfg, "forcing", c.forcing);
    c.omegas = value_or(cfg, "omegas", c.omegas);
    c.t_end = value_or(cfg, "t_end", c.t_end);
    c.dt = value_or(cfg, "dt", c.dt);
    const auto z0 = value_or(cfg, "z0", std::vector<double>{c.z0(0), c.z0(1)});
    if (z0.size() != 2) throw DataError("z0 must have 2 entries");
    c.z0 = Eigen::Vector2d(z0[0], z0[1]);
    c.finite_difference = value_or(cfg, "finite_difference", false);
    set = gen_duffing(lift, c);
  } else if (o.system == "stuart-landau") {
    check_keys(cfg, {"seed", "ambient_dim", "quadratic_scale", "noise", "mus", "omega", "t_end",
                     "dt", "z0", "finite_difference"});
    StuartLandauConfig c;
    c.mus = value_or(cfg, "mus", c.mus);
    c.omega = value_or(cfg, "omega", c.omega);
    c.t_end = value_or(cfg, "t_end", c.t_end);
    c.dt = value_or(cfg, "dt", c.dt);
    const auto z0 = value_or(cfg, "z0", std::vector<double>{c.z0(0), c.z0(1)});
    if (z0.size() != 2) throw DataError("z0 must have 2 entries");
    c.z0 = Eigen::Vector2d(z0[0], z0[1]);
    c.finite_difference = value_or(cfg, "finite_difference", false);
    set = gen_stuart_landau(lift, c);
  } else {
    throw DataError("unknown system '" + o.system + "'");
  }
  save_snapshots(set, o.out);
  spdlog::info("wrote {} rows ({} instances, N = {}) to {}", set.rows(), set.instances().size(),
               set.state_dim(), o.out);
  return 0;
}

// ---- train ----

struct TrainOptions {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> fine_tune_epochs;
  std::optional<Eigen::Index> latent_dim;
  std::optional<double> learning_rate;
};

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return {};
  require_file(path, "config");
  return train_config_from_json(read_json_file(path));
}

SnapshotSet load_training_data(const std::string& path, const TrainConfig& cfg) {
  require_file(path, "data file");
  SnapshotSet data = load_snapshots(path);
  if (!data.derivatives) {
    spdlog::info("data has no derivatives; using finite differences");
    data = finite_difference_derivatives(data);
  }
  if (!cfg.test_instances.empty()) data = split_by_instance(data, cfg.test_instances).first;
  return data;
}

int run_train(const TrainOptions& o) {
  TrainConfig cfg = load_train_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.fine_tune_epochs) cfg.fine_tune_epochs = *o.fine_tune_epochs;
  if (o.latent_dim) cfg.latent_dim = *o.latent_dim;
  if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
  cfg.validate();
  require_writable(o.out);
  const SnapshotSet data = load_training_data(o.data, cfg);
  TrainedModel model = train(data, cfg);
  if (cfg.fine_tune_epochs > 0 || cfg.threshold > 0) model = fine_tune_sindy(model, data, cfg);
  save_model(model, o.out);
  if (!model.log.empty())
    spdlog::info("final loss {:.6e} (ae {:.3e}); model written to {}", model.log.back().total,
                 model.log.back().ae, o.out);
  return 0;
}

// ---- simulate ----

struct SimulateOptions {
  std::string model;
  std::string x0;
  std::string data;
  std::string beta;
  double t0 = 0.0;
  double t_end = 0.0;
  std::optional<double> dt;
  bool decode = false;
  std::string out;
};

int run_simulate(const SimulateOptions& o) {
  require_file(o.model, "model file");
  require_writable(o.out);
  const TrainedModel model = load_model(o.model);
  Eigen::VectorXd x0;
  std::optional<SnapshotSet> data;
  if (!o.data.empty()) {
    require_file(o.data, "data file");
    data = load_snapshots(o.data);
  }
  if (fs::is_regular_file(o.x0)) {
    const SnapshotSet s = load_snapshots(o.x0);
    if (s.rows() == 0) throw DataError("x0 file is empty");
    x0 = s.states.row(0).transpose();
  } else {
    char* end = nullptr;
    const long long row = std::strtoll(o.x0.c_str(), &end, 10);
    if (end == o.x0.c_str() || *end != '\0') throw DataError("--x0 is neither a file nor a row index: " + o.x0);
    if (!data) throw DataError("--x0 as a row index needs --data");
    if (row < 0 || row >= data->rows()) throw DataError("--x0 row index out of range");
    x0 = data->states.row(row).transpose();
  }
  const Eigen::VectorXd beta = to_vec(parse_list(o.beta, "--beta"));
  if (beta.size() != model.latent.param_dim())
    throw DataError("model expects " + std::to_string(model.latent.param_dim()) + " parameters, --beta has " +
                    std::to_string(beta.size()));
  double dt = 0.0;
  if (o.dt) {
    dt = *o.dt;
  } else if (data && data->steps_per_instance() >= 2) {
    dt = data->times(1) - data->times(0);
  } else {
    throw DataError("--dt is required unless --data provides the sampling step");
  }
  if (!(dt > 0)) throw DataError("--dt must be positive");
  if (!(o.t_end >= o.t0)) throw DataError("--t-end must not precede --t0");

  Trajectory traj = integrate_latent(model, encode_state(model, x0), ParamSchedule(beta), o.t0, o.t_end, dt);
  if (o.decode) traj = decode_trajectory(model, std::move(traj));
  std::string csv = "t";
  for (Eigen::Index k = 0; k < traj.latent.cols(); ++k) csv += ",z" + std::to_string(k + 1);
  if (traj.decoded)
    for (Eigen::Index k = 0; k < traj.decoded->cols(); ++k) csv += ",x" + std::to_string(k + 1);
  csv += "\n";
  for (Eigen::Index i = 0; i < traj.steps(); ++i) {
    csv += num(traj.times(i));
    for (Eigen::Index k = 0; k < traj.latent.cols(); ++k) csv += "," + num(traj.latent(i, k));
    if (traj.decoded)
      for (Eigen::Index k = 0; k < traj.decoded->cols(); ++k) csv += "," + num((*traj.decoded)(i, k));
    csv += "\n";
  }
  write_text(o.out, csv);
  return 0;
}

// ---- continue ----

struct ContinueOptions {
  std::string model;
  std::string param;
  double from = 0.0;
  std::string range;
  double ds = 0.01;
  std::string mode = "autonomous";
  std::optional<Eigen::Index> output_node;
  Eigen::Index latent_output = 0;
  std::vector<std::string> set;
  std::string z0;
  int max_points = 200;
  double settle_time = 300.0;
  double settle_dt = 0.01;
  Eigen::Index elements = 40;
  int degree = 4;
  std::string out;
};

int run_continue(const ContinueOptions& o) {
  require_file(o.model, "model file");
  require_writable(o.out);
  const TrainedModel model = load_model(o.model);
  PeriodicProblem problem;
  problem.model = model.latent;
  problem.active = model.latent.transform.index_of(o.param);
  if (problem.active < 0) throw DataError("unknown parameter '" + o.param + "'");
  if (o.mode == "forced")
    problem.mode = OrbitMode::Forced;
  else if (o.mode == "autonomous")
    problem.mode = OrbitMode::Autonomous;
  else
    throw DataError("--mode must be forced or autonomous");
  problem.output = o.latent_output;

  problem.params = Eigen::VectorXd::Zero(model.latent.param_dim());
  std::vector<bool> given(static_cast<std::size_t>(problem.params.size()), false);
  given[static_cast<std::size_t>(problem.active)] = true;
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("--set expects name=value, got '" + kv + "'");
    const Eigen::Index idx = model.latent.transform.index_of(kv.substr(0, eq));
    if (idx < 0) throw DataError("unknown parameter '" + kv.substr(0, eq) + "'");
    const auto vals = parse_list(kv.substr(eq + 1), "--set");
    if (vals.size() != 1) throw DataError("--set expects one value per parameter");
    problem.params(idx) = vals[0];
    given[static_cast<std::size_t>(idx)] = true;
  }
  for (std::size_t i = 0; i < given.size(); ++i)
    if (!given[i])
      throw DataError("parameter '" + model.latent.transform.components[i].name + "' needs a value (--set)");

  const auto colon = o.range.find(':');
  if (colon == std::string::npos) throw DataError("--range expects a:b");
  const auto lo = parse_list(o.range.substr(0, colon), "--range");
  const auto hi = parse_list(o.range.substr(colon + 1), "--range");
  if (lo.size() != 1 || hi.size() != 1) throw DataError("--range expects a:b");

  Eigen::VectorXd z0 = Eigen::VectorXd::Constant(model.latent_dim(), 0.1);
  if (!o.z0.empty()) {
    z0 = to_vec(parse_list(o.z0, "--z0"));
    if (z0.size() != model.latent_dim()) throw DataError("--z0 has the wrong dimension");
  }
  if (o.output_node && (*o.output_node < 0 || *o.output_node >= model.pod.state_dim()))
    throw DataError("--output-node out of range");

  ContinuationOptions opts;
  opts.ds = o.ds;
  opts.max_points = o.max_points;
  opts.seed.settle_time = o.settle_time;
  opts.seed.dt = o.settle_dt;
  opts.seed.n_elements = o.elements;
  opts.seed.degree = o.degree;
  const Branch branch = continue_branch(problem, o.from, lo[0], hi[0], z0, opts);
  const auto rows = o.output_node ? decode_branch(model, branch, *o.output_node) : latent_summaries(branch);
  write_text(o.out, branch_to_csv(rows, branch));
  spdlog::info("{} branch points, {} folds, termination: {}", branch.points.size(), branch.folds.size(),
               termination_name(branch.termination));
  if (branch.termination == Termination::NewtonFailure)
    throw NumericalError("continuation stopped: Newton failure at the minimum step size");
  return 0;
}

// ---- inspect / sweep ----

int run_inspect(const std::string& path, std::ostream& out) {
  require_file(path, "model file");
  const TrainedModel model = load_model(path);
  out << "latent dimension: " << model.latent_dim() << ", features: " << model.latent.library.size()
      << ", POD modes: " << model.pod.modes() << ", state dimension: " << model.pod.state_dim() << "\n";
  out << "parameters:";
  for (const auto& c : model.latent.transform.components) out << " " << c.name;
  out << "\n\n" << format_equations(model.latent) << "\n";
  out << "training log (" << model.log.size() << " epochs)\n";
  out << "phase,epoch,total,ae,sindy,l1,consistency\n";
  for (const auto& e : model.log)
    out << e.phase << "," << e.epoch << "," << num(e.total) << "," << num(e.ae) << "," << num(e.sindy) << ","
        << num(e.l1) << "," << num(e.consistency) << "\n";
  return 0;
}

struct SweepOptions {
  std::string config;
  std::string data;
  Eigen::Index max_dim = 4;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out;
};

int run_sweep(const SweepOptions& o, std::ostream& out) {
  TrainConfig cfg = load_train_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.max_dim < 1) throw DataError("--max-dim must be positive");
  if (!o.out.empty()) require_writable(o.out);
  const SnapshotSet data = load_training_data(o.data, cfg);
  const auto points = latent_dimension_sweep(data, cfg, o.max_dim);
  std::string csv = "latent_dim,ae,total\n";
  for (const auto& p : points) csv += std::to_string(p.latent_dim) + "," + num(p.ae) + "," + num(p.total) + "\n";
  if (o.out.empty())
    out << csv;
  else
    write_text(o.out, csv);
  return 0;
}

}  // namespace

std::string format_equations(const LatentModel& model, int digits) {
  const std::string fmt = "%." + std::to_string(digits) + "g";
  const auto& xi = model.xi.values;
  std::string text;
  for (Eigen::Index j = 0; j < xi.cols(); ++j) {
    std::string line = "dz" + std::to_string(j + 1) + "/dt = ";
    bool first = true;
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
      const double c = xi(i, j);
      if (c == 0.0) continue;
      const std::string name = model.library.name(i);
      const std::string mag = num(std::abs(c), fmt.c_str());
      if (!first) line += c < 0 ? " - " : " + ";
      else if (c < 0) line += "-";
      if (name == "1") line += mag;
      else line += mag == "1" ? name : mag + "*" + name;
      first = false;
    }
    if (first) line += "0";
    text += line + "\n";
  }
  return text;
}

void configure_logging() {
  const char* env = std::getenv("AESD_LOG");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Autoencoder + parametric SINDy reduced-order modelling"};
  app.name("aesd");
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic lifted dataset");
  gen_cmd->add_option("--system", gen.system, "duffing or stuart-landau")->required();
  gen_cmd->add_option("--config", gen.config, "JSON generator settings");
  gen_cmd->add_option("--out", gen.out, "Output .aesd file")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed (overrides the config)");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train encoder, decoder and SINDy coefficients");
  train_cmd->add_option("--config", tr.config, "JSON training config");
  train_cmd->add_option("--data", tr.data, "Training .aesd file")->required();
  train_cmd->add_option("--out", tr.out, "Output model JSON")->required();
  train_cmd->add_option("--seed", tr.seed, "Random seed (overrides the config)");
  train_cmd->add_option("--epochs", tr.epochs, "Joint training epochs");
  train_cmd->add_option("--fine-tune-epochs", tr.fine_tune_epochs, "SINDy fine-tuning epochs");
  train_cmd->add_option("--latent-dim", tr.latent_dim, "Latent dimension n");
  train_cmd->add_option("--learning-rate", tr.learning_rate, "ADAM learning rate");

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Encode, time-march and decode");
  sim_cmd->add_option("--model", sim.model, "Model JSON")->required();
  sim_cmd->add_option("--x0", sim.x0, "Initial state: .aesd file (first row) or row index into --data")->required();
  sim_cmd->add_option("--data", sim.data, "Snapshot file for --x0 row indices and default dt");
  sim_cmd->add_option("--beta", sim.beta, "Comma-separated raw parameter values")->required();
  sim_cmd->add_option("--t0", sim.t0, "Start time");
  sim_cmd->add_option("--t-end", sim.t_end, "End time")->required();
  sim_cmd->add_option("--dt", sim.dt, "Time step");
  sim_cmd->add_flag("--decode", sim.decode, "Append decoded full-order columns");
  sim_cmd->add_option("--out", sim.out, "Output CSV")->required();

  ContinueOptions co;
  auto* cont_cmd = app.add_subcommand("continue", "Continue periodic orbits of the latent model");
  cont_cmd->add_option("--model", co.model, "Model JSON")->required();
  cont_cmd->add_option("--param", co.param, "Continuation parameter name")->required();
  cont_cmd->add_option("--from", co.from, "Starting parameter value")->required();
  cont_cmd->add_option("--range", co.range, "Parameter range a:b")->required();
  cont_cmd->add_option("--ds", co.ds, "Arclength step");
  cont_cmd->add_option("--mode", co.mode, "forced or autonomous")->required();
  cont_cmd->add_option("--output-node", co.output_node, "Full-order state index for the amplitude");
  cont_cmd->add_option("--latent-output", co.latent_output, "Latent component for stepping and latent amplitude");
  cont_cmd->add_option("--set", co.set, "Other parameters, name=value");
  cont_cmd->add_option("--z0", co.z0, "Comma-separated latent state to seed from");
  cont_cmd->add_option("--max-points", co.max_points, "Point budget");
  cont_cmd->add_option("--settle-time", co.settle_time, "Integration time before period extraction");
  cont_cmd->add_option("--settle-dt", co.settle_dt, "Time step while seeding");
  cont_cmd->add_option("--elements", co.elements, "Collocation elements");
  cont_cmd->add_option("--degree", co.degree, "Collocation degree");
  cont_cmd->add_option("--out", co.out, "Output CSV")->required();

  std::string inspect_model;
  auto* insp_cmd = app.add_subcommand("inspect", "Print the identified system and training log");
  insp_cmd->add_option("--model", inspect_model, "Model JSON")->required();

  SweepOptions sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train at latent dimensions 1..max and report the AE loss");
  sweep_cmd->add_option("--config", sw.config, "JSON training config");
  sweep_cmd->add_option("--data", sw.data, "Training .aesd file")->required();
  sweep_cmd->add_option("--max-dim", sw.max_dim, "Largest latent dimension");
  sweep_cmd->add_option("--seed", sw.seed, "Random seed (overrides the config)");
  sweep_cmd->add_option("--epochs", sw.epochs, "Joint training epochs");
  sweep_cmd->add_option("--out", sw.out, "Output CSV (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "ERROR: usage: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*sim_cmd) return run_simulate(sim);
    if (*cont_cmd) return run_continue(co);
    if (*insp_cmd) return run_inspect(inspect_model, out);
    if (*sweep_cmd) return run_sweep(sw, out);
  } catch (const DataError& e) {
    err << "ERROR: data: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "ERROR: numerical: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "ERROR: data: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int dispatch(int argc, char** argv) {
  configure_logging();
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace aesindy
