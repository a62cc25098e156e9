#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "infokoop/allocation.hpp"
#include "infokoop/dynamics.hpp"
#include "infokoop/errors.hpp"
#include "infokoop/evaluation.hpp"
#include "infokoop/gaussian_info.hpp"
#include "infokoop/io.hpp"
#include "infokoop/koopman_ae.hpp"

namespace infokoop::cli {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("--" + key + ": expected an integer, got '" + text + "'");
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("--" + key + ": expected a number, got '" + text + "'");
}

json parse_flag(const Setting& s, const std::string& text) {
  switch (s.kind) {
    case Kind::Int: return parse_int(s.key, text);
    case Kind::Real: return parse_real(s.key, text);
    case Kind::Text: return text;
    case Kind::Bool: return text == "true" || text == "1";
    case Kind::RealList: {
      json out = json::array();
      for (const std::string& item : split(text, ',')) out.push_back(parse_real(s.key, item));
      return out;
    }
    case Kind::IntList: {
      json out = json::array();
      for (const std::string& item : split(text, ',')) out.push_back(parse_int(s.key, item));
      return out;
    }
    case Kind::TextList: {
      json out = json::array();
      for (const std::string& item : split(text, ',')) out.push_back(item);
      return out;
    }
  }
  return nullptr;
}

void check_type(const Setting& s, const json& v) {
  if (v.is_null()) return;
  bool ok = false;
  switch (s.kind) {
    case Kind::Int: ok = v.is_number_integer(); break;
    case Kind::Real: ok = v.is_number(); break;
    case Kind::Text: ok = v.is_string(); break;
    case Kind::Bool: ok = v.is_boolean(); break;
    case Kind::RealList:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
      break;
    case Kind::IntList:
      ok = v.is_array() &&
           std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
      break;
    case Kind::TextList:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
      break;
  }
  if (!ok) throw InputError("config key '" + s.key + "' has the wrong type");
}

std::string flag_names(const Setting& s) {
  if (!s.flags.empty()) return s.flags;
  std::string dashed = s.key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  return "--" + dashed;
}

}  // namespace

Command::Command(CLI::App& parent, std::string name, std::string description,
                 std::vector<Setting> settings, Handler handler)
    : name_(std::move(name)), settings_(std::move(settings)), handler_(std::move(handler)) {
  app_ = parent.add_subcommand(name_, description);
  app_->add_option("--config", config_path_, "JSON file with settings (flags override)");
  for (const Setting& s : settings_) {
    if (s.kind == Kind::Bool) {
      flag_seen_[s.key] = false;
      app_->add_flag(flag_names(s), flag_seen_[s.key], s.help);
    } else {
      raw_[s.key];
      app_->add_option(flag_names(s), raw_[s.key], s.help);
    }
  }
}

void Command::add_positional(const std::string& key) {
  std::string upper = key;
  std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
  app_->add_option(upper, raw_[key], "same as --" + key);
}

json Command::resolve() const {
  std::map<std::string, const Setting*> by_key;
  for (const Setting& s : settings_) by_key[s.key] = &s;

  json file = json::object();
  if (!config_path_.empty()) {
    try {
      file = json::parse(read_text_file(config_path_));
    } catch (const json::exception& e) {
      throw InputError("config '" + config_path_ + "' is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw InputError("config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != name_)
          throw InputError("config was written for command '" + value.dump() + "'");
        continue;
      }
      const auto it = by_key.find(key);
      if (it == by_key.end()) throw InputError("unknown config key '" + key + "'");
      check_type(*it->second, value);
    }
  }

  json flags = json::object();
  for (const Setting& s : settings_) {
    if (s.kind == Kind::Bool) {
      if (flag_seen_.at(s.key)) flags[s.key] = true;
      continue;
    }
    if (!raw_.at(s.key).empty()) flags[s.key] = parse_flag(s, raw_.at(s.key));
  }

  json resolved = json::object();
  for (const Setting& s : settings_) resolved[s.key] = s.fallback;
  if (!presets_.empty()) {
    json preset = resolved.value("preset", json());
    if (file.contains("preset")) preset = file["preset"];
    if (flags.contains("preset")) preset = flags["preset"];
    if (!preset.is_null()) {
      const auto it = presets_.find(preset.get<std::string>());
      if (it == presets_.end()) throw InputError("unknown preset '" + preset.get<std::string>() + "'");
      for (const auto& [key, value] : it->second.items()) resolved[key] = value;
    }
  }
  for (const auto& [key, value] : file.items())
    if (key != "command") resolved[key] = value;
  for (const auto& [key, value] : flags.items()) resolved[key] = value;
  resolved["command"] = name_;
  return resolved;
}

namespace {

// ---------------------------------------------------------------------------
// Helpers shared by the handlers.

std::string require_text(const json& c, const std::string& key) {
  if (!c.contains(key) || c[key].is_null() || c[key].get<std::string>().empty())
    throw InputError("--" + key + " is required");
  return c[key].get<std::string>();
}

std::vector<std::string> require_paths(const json& c, const std::string& key) {
  if (!c.contains(key) || c[key].is_null() || c[key].empty())
    throw InputError("--" + key + " is required");
  return c[key].get<std::vector<std::string>>();
}

bool has(const json& c, const std::string& key) { return c.contains(key) && !c[key].is_null(); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Writes `text` to `out` (or stdout when out is empty) and the resolved
// config next to it.
void emit(const json& config, const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  write_text_file(out, text);
  write_text_file(out + ".config.json", dump(config));
}

Eigen::VectorXd to_vector(const json& list) {
  const std::vector<double> v = list.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

std::vector<Trajectory> load_trajectories(const std::vector<std::string>& paths) {
  std::vector<Trajectory> out;
  for (const std::string& p : paths) out.push_back(read_trajectory_csv(p));
  return out;
}

NormalizationRecord pooled_normalization(const std::vector<Trajectory>& data) {
  Eigen::Index rows = 0;
  for (const Trajectory& t : data) rows += t.states.rows();
  Trajectory pooled = data.front();
  pooled.states.resize(rows, data.front().dim());
  Eigen::Index r = 0;
  for (const Trajectory& t : data) {
    if (t.dim() != pooled.dim()) throw InputError("trajectories differ in state dimension");
    pooled.states.middleRows(r, t.states.rows()) = t.states;
    r += t.states.rows();
  }
  return normalize(pooled).second;
}

TrainConfig train_config_from(const json& c) {
  TrainConfig t;
  t.alpha = c["alpha"].get<double>();
  t.beta = c["beta"].get<double>();
  t.gamma = c["gamma"].get<double>();
  t.lr = c["lr"].get<double>();
  t.lr_decay = c["lr_decay"].get<double>();
  t.epochs = c["epochs"].get<int>();
  t.batch = c["batch"].get<int>();
  t.window_k = c["window_k"].get<int>();
  t.temperature_tau = c["temperature_tau"].get<double>();
  t.seed = c["seed"].get<std::uint64_t>();
  t.latent_dim = c["latent_dim"].get<int>();
  t.hidden = c["hidden"].get<std::vector<int>>();
  t.mode = mode_from_string(c["mode"].get<std::string>());
  t.validate();
  return t;
}

std::vector<Setting> model_settings(const TrainConfig& d) {
  return {
      {"alpha", Kind::Real, d.alpha, "temporal coherence weight"},
      {"beta", Kind::Real, d.beta, "Koopman consistency (AE) or structural (VAE) weight"},
      {"gamma", Kind::Real, d.gamma, "von Neumann entropy weight"},
      {"lr", Kind::Real, d.lr, "Adam learning rate"},
      {"lr_decay", Kind::Real, d.lr_decay, "per-epoch learning-rate factor"},
      {"epochs", Kind::Int, d.epochs, "training epochs"},
      {"batch", Kind::Int, d.batch, "window length per minibatch"},
      {"window_k", Kind::Int, d.window_k, "InfoNCE neighbour window k", "--window-k,-k"},
      {"temperature_tau", Kind::Real, d.temperature_tau, "InfoNCE temperature",
       "--tau,--temperature-tau"},
      {"seed", Kind::Int, d.seed, "random seed"},
      {"latent_dim", Kind::Int, d.latent_dim, "latent dimension d", "--latent-dim,-d"},
      {"hidden", Kind::IntList, d.hidden, "hidden widths, comma separated"},
      {"mode", Kind::Text, to_string(d.mode), "ae or vae"},
  };
}

template <typename T>
std::vector<T> concat(std::vector<T> a, const std::vector<T>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// ---------------------------------------------------------------------------
// Handlers.

void run_simulate(const json& c) {
  const std::string system = require_text(c, "system");
  const int steps = c["steps"].get<int>();
  const std::uint64_t seed = c["seed"].get<std::uint64_t>();
  const std::string out = has(c, "out") ? c["out"].get<std::string>() : "";
  std::string text;
  if (system == "lorenz63" || system == "vanderpol") {
    const bool lorenz = system == "lorenz63";
    const double dt = has(c, "dt") ? c["dt"].get<double>() : 0.1;
    const int burn_in = has(c, "burn_in") ? c["burn_in"].get<int>() : (lorenz ? 1000 : 0);
    if (burn_in < 0) throw InputError("--burn-in must be >= 0");
    Eigen::VectorXd x0;
    if (has(c, "x0")) {
      x0 = to_vector(c["x0"]);
    } else {
      // Seeded start near a default point, so seeds give distinct runs.
      CounterRng rng(seed, 11);
      x0 = lorenz ? Eigen::VectorXd(Eigen::Vector3d(1, 1, 1)) : Eigen::VectorXd(Eigen::Vector2d(2, 0));
      x0 += 0.1 * rng.normal_vector(x0.size());
    }
    if (x0.size() != (lorenz ? 3 : 2))
      throw InputError("--x0 must have " + std::to_string(lorenz ? 3 : 2) + " entries");
    const double mu = c["mu"].get<double>();
    auto integrate = [&](const Eigen::VectorXd& start, int n) {
      return lorenz ? simulate_lorenz63(Eigen::Vector3d(start), n, dt)
                    : simulate_vanderpol(Eigen::Vector2d(start), mu, n, dt);
    };
    if (burn_in > 0) x0 = integrate(x0, burn_in).states.bottomRows(1).transpose();
    Trajectory traj = integrate(x0, steps);
    const double noise = c["noise"].get<double>();
    if (noise > 0.0) traj = add_observation_noise(traj, noise, seed);
    text = trajectory_csv(traj);
  } else if (system == "linear_gaussian") {
    const LinearGaussianKoopman<double> model =
        linear_gaussian_from_json(json::parse(read_text_file(require_text(c, "model"))));
    const Eigen::VectorXd z0 =
        has(c, "x0") ? to_vector(c["x0"]) : Eigen::VectorXd::Zero(model.latent_dim());
    text = paired_csv(simulate_linear_gaussian(model, z0, steps, seed));
  } else {
    throw InputError("unknown system '" + system + "' (expected lorenz63, vanderpol or linear_gaussian)");
  }
  emit(c, out, text);
}

void run_train(const json& c) {
  const TrainConfig config = train_config_from(c);
  const std::vector<std::string> paths = require_paths(c, "data");
  const std::string out_dir = require_text(c, "out");
  std::vector<Trajectory> data = load_trajectories(paths);
  const double noise = c["noise"].get<double>();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (noise > 0.0) data[i] = add_observation_noise(data[i], noise, config.seed + 1 + i);
  const NormalizationRecord record = pooled_normalization(data);
  for (Trajectory& t : data) t = apply_normalization(t, record);

  const TrainResult result = train(data, config);
  std::filesystem::create_directories(out_dir);
  const std::string dir = out_dir + "/";
  write_text_file(dir + "checkpoint.json", dump(to_json(Checkpoint{result.model, config, record})));
  write_text_file(dir + "train_log.csv", training_log_csv(result.log));
  write_text_file(dir + "config.json", dump(c));
  if (result.diverged) throw NumericError("training diverged (" + result.message +
                                          "); last good checkpoint kept in " + dir);
}

Checkpoint load_checkpoint(const json& c) {
  try {
    return checkpoint_from_json(json::parse(read_text_file(require_text(c, "checkpoint"))));
  } catch (const json::parse_error& e) {
    throw InputError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
}

void run_eval(const json& c) {
  const Checkpoint ck = load_checkpoint(c);
  std::vector<Trajectory> tests = load_trajectories(require_paths(c, "data"));
  if (ck.normalization)
    for (Trajectory& t : tests) t = apply_normalization(t, *ck.normalization);
  EvalConfig config;
  config.horizons = c["horizons"].get<std::vector<int>>();
  config.initial_conditions = c["initial_conditions"].get<int>();
  config.kld_bins = c["bins"].get<int>();
  const EvalReport report = evaluate(ck.model, tests, config);
  const bool timing = c["timing"].get<bool>();
  const std::string out = has(c, "out") ? c["out"].get<std::string>() : "";
  emit(c, out, dump(to_json(report, timing)));
  if (!out.empty()) {
    std::string csv_path = out;
    if (csv_path.size() > 5 && csv_path.substr(csv_path.size() - 5) == ".json")
      csv_path.resize(csv_path.size() - 5);
    write_text_file(csv_path + ".csv", eval_report_csv(report));
  }
}

void run_info(const json& c) {
  json model_json;
  try {
    model_json = json::parse(read_text_file(require_text(c, "model")));
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model is not valid JSON: ") + e.what());
  }
  const LinearGaussianKoopman<double> model = linear_gaussian_from_json(model_json);
  const InfoReport report = info_report(model, c["n"].get<int>(), c["cbar"].get<double>());
  emit(c, has(c, "out") ? c["out"].get<std::string>() : "", dump(to_json(report)));
}

void run_allocate(const json& c) {
  if (!has(c, "gains")) throw InputError("--gains is required");
  const Eigen::VectorXd g = to_vector(c["gains"]);
  const double budget = c["budget"].get<double>();
  const double gamma = c["gamma"].get<double>();
  if (gamma < 0.0) throw InputError("--gamma must be >= 0");
  const Allocation<double> a = gamma == 0.0 ? water_fill<double>(g, budget)
                                            : entropy_regularized_allocation<double>(g, budget, gamma);
  emit(c, has(c, "out") ? c["out"].get<std::string>() : "", dump(to_json(a)));
}

void run_spectrum(const json& c) {
  const Checkpoint ck = load_checkpoint(c);
  emit(c, has(c, "out") ? c["out"].get<std::string>() : "",
       spectrum_csv(koopman_spectrum(ck.model.K)));
}

void run_gradcheck(const json& c) {
  KoopmanAutoencoder model;
  TrainConfig config;
  if (has(c, "checkpoint")) {
    const Checkpoint ck = load_checkpoint(c);
    model = ck.model;
    config = ck.config;
  } else {
    config = train_config_from(c);
    model = init_model(c["state_dim"].get<int>(), config);
  }
  const std::uint64_t seed = c["seed"].get<std::uint64_t>();
  const int rows = config.batch;
  Eigen::MatrixXd batch;
  if (has(c, "data")) {
    Trajectory t = read_trajectory_csv(c["data"].get<std::string>());
    t = apply_normalization(t, normalize(t).second);
    if (t.states.rows() < rows) throw InputError("gradcheck data shorter than one batch");
    batch = t.states.topRows(rows);
  } else {
    CounterRng rng(seed, 21);
    batch = rng.normal_matrix(rows, model.state_dim());
  }
  // Give the untrained model some non-trivial structure in K and biases.
  if (!has(c, "checkpoint")) {
    CounterRng rng(seed, 22);
    model.K += 0.1 * rng.normal_matrix(model.latent_dim(), model.latent_dim());
    for (Eigen::MatrixXd* p : model.parameters())
      if (p->rows() == 1 && p != &model.transition_logvar) *p += 0.1 * rng.normal_matrix(1, p->cols());
  }
  const double step = c["step"].get<double>();
  const double tolerance = c["tolerance"].get<double>();
  json terms = json::array();
  bool passed = true;
  for (LossTerm term : loss_terms(model.mode)) {
    const GradCheckResult r = gradient_check(model, batch, config, seed, term, step);
    json params = json::array();
    for (const GradCheckParameter& p : r.parameters)
      params.push_back({{"name", p.name},
                        {"max_rel_error", p.max_rel_error},
                        {"max_abs_error", p.max_abs_error},
                        {"entries", p.entries},
                        {"one_sided", p.one_sided},
                        {"skipped", p.skipped}});
    const bool ok = r.max_rel_error <= tolerance;
    passed = passed && ok;
    terms.push_back({{"term", to_string(term)},
                     {"max_rel_error", r.max_rel_error},
                     {"skipped", r.skipped},
                     {"passed", ok},
                     {"parameters", params}});
  }
  const json report = {{"mode", to_string(model.mode)},
                       {"tolerance", tolerance},
                       {"step", step},
                       {"passed", passed},
                       {"terms", terms}};
  emit(c, has(c, "out") ? c["out"].get<std::string>() : "", dump(report));
  if (!passed) throw NumericError("gradient check failed: relative error above tolerance");
}

}  // namespace

void register_commands(CLI::App& app, std::vector<std::unique_ptr<Command>>& commands) {
  const TrainConfig defaults;
  const json none = nullptr;

  auto simulate = std::make_unique<Command>(
      app, "simulate", "Generate a trajectory CSV",
      std::vector<Setting>{
          {"system", Kind::Text, none, "lorenz63, vanderpol or linear_gaussian"},
          {"steps", Kind::Int, 1000, "number of steps (rows = steps + 1)"},
          {"dt", Kind::Real, none, "time step (default 0.1)"},
          {"seed", Kind::Int, 0, "random seed"},
          {"x0", Kind::RealList, none, "initial state (or z0), comma separated"},
          {"mu", Kind::Real, 1.0, "Van der Pol damping"},
          {"noise", Kind::Real, 0.0, "observation noise as a fraction of the data std"},
          {"burn_in", Kind::Int, none, "steps discarded first (default 1000 for lorenz63)"},
          {"model", Kind::Text, none, "linear-Gaussian model JSON"},
          {"out", Kind::Text, none, "output CSV (stdout when absent)"},
      },
      run_simulate);
  simulate->add_positional("system");
  commands.push_back(std::move(simulate));

  auto train_cmd = std::make_unique<Command>(
      app, "train", "Train a Koopman autoencoder",
      concat(model_settings(defaults),
             std::vector<Setting>{
                 {"data", Kind::TextList, none, "training CSV files, comma separated"},
                 {"out", Kind::Text, none, "output directory"},
                 {"noise", Kind::Real, 0.0, "observation noise fraction added before training"},
                 {"preset", Kind::Text, none, "hyperparameter preset (physical)"},
             }),
      run_train);
  train_cmd->set_presets({{"physical", {{"alpha", 2.0}, {"gamma", 0.1}, {"window_k", 3}}}});
  commands.push_back(std::move(train_cmd));

  commands.push_back(std::make_unique<Command>(
      app, "eval", "Evaluate forecasts of a checkpoint",
      std::vector<Setting>{
          {"checkpoint", Kind::Text, none, "checkpoint JSON"},
          {"data", Kind::TextList, none, "test CSV files, comma separated"},
          {"horizons", Kind::IntList, json::array({5, 20, 50}), "NRMSE horizons"},
          {"initial_conditions", Kind::Int, 20, "initial conditions per test trajectory"},
          {"bins", Kind::Int, 64, "histogram bins for KLD"},
          {"timing", Kind::Bool, false, "include runtime_seconds in the report"},
          {"out", Kind::Text, none, "report JSON path (CSV written alongside)"},
      },
      run_eval));

  commands.push_back(std::make_unique<Command>(
      app, "info", "Closed-form information report of a linear-Gaussian model",
      std::vector<Setting>{
          {"model", Kind::Text, none, "model JSON with K, Sigma, C, D, R"},
          {"n", Kind::Int, 5, "step count n >= 2"},
          {"cbar", Kind::Real, 1.0, "moment-bound constant"},
          {"out", Kind::Text, none, "output JSON (stdout when absent)"},
      },
      run_info));

  commands.push_back(std::make_unique<Command>(
      app, "allocate", "Spectral allocation under a trace budget",
      std::vector<Setting>{
          {"gains", Kind::RealList, none, "gains g_i, comma separated"},
          {"budget", Kind::Real, 1.0, "trace budget"},
          {"gamma", Kind::Real, 0.0, "entropy weight (0 = water-filling)"},
          {"out", Kind::Text, none, "output JSON (stdout when absent)"},
      },
      run_allocate));

  commands.push_back(std::make_unique<Command>(
      app, "spectrum", "Export Koopman eigenvalues",
      std::vector<Setting>{
          {"checkpoint", Kind::Text, none, "checkpoint JSON"},
          {"out", Kind::Text, none, "output CSV (stdout when absent)"},
      },
      run_spectrum));

  TrainConfig small = defaults;
  small.latent_dim = 4;
  small.hidden = {8, 8};
  small.batch = 16;
  std::vector<Setting> grad_settings = model_settings(small);
  for (Setting& s : grad_settings)
    if (s.key == "seed") s.help = "seed for the model, batch and VAE noise";
  commands.push_back(std::make_unique<Command>(
      app, "gradcheck", "Compare reverse-mode gradients with finite differences",
      concat(grad_settings,
             std::vector<Setting>{
                 {"checkpoint", Kind::Text, none, "checkpoint JSON (fresh model when absent)"},
                 {"data", Kind::Text, none, "CSV for the batch (random batch when absent)"},
                 {"state_dim", Kind::Int, 3, "state dimension of a fresh model"},
                 {"step", Kind::Real, 1e-5, "finite-difference step"},
                 {"tolerance", Kind::Real, 1e-4, "maximum relative error"},
                 {"out", Kind::Text, none, "output JSON (stdout when absent)"},
             }),
      run_gradcheck));
}

}  // namespace infokoop::cli
