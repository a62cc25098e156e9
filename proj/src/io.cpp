#include "infokoop/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "infokoop/errors.hpp"

namespace infokoop {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::string csv_header(Eigen::Index n, Eigen::Index d) {
  std::string h = "t";
  for (Eigen::Index j = 0; j < n; ++j) h += ",x" + std::to_string(j);
  for (Eigen::Index j = 0; j < d; ++j) h += ",z" + std::to_string(j);
  return h + "\n";
}

void append_row(std::string& out, double t, const Eigen::MatrixXd& a, Eigen::Index row,
                const Eigen::MatrixXd* b) {
  out += format_double(t);
  for (Eigen::Index j = 0; j < a.cols(); ++j) out += "," + format_double(a(row, j));
  if (b)
    for (Eigen::Index j = 0; j < b->cols(); ++j) out += "," + format_double((*b)(row, j));
  out += "\n";
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = csv_header(traj.dim(), 0);
  for (Eigen::Index t = 0; t < traj.states.rows(); ++t)
    append_row(out, double(t) * traj.dt, traj.states, t, nullptr);
  return out;
}

std::string paired_csv(const PairedLatentTrajectory& traj) {
  std::string out = csv_header(traj.observations.cols(), traj.latents.cols());
  for (Eigen::Index t = 0; t < traj.observations.rows(); ++t)
    append_row(out, double(t) * traj.dt, traj.observations, t, &traj.latents);
  return out;
}

Trajectory parse_trajectory_csv(const std::string& text, const std::string& system_id) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("trajectory CSV is empty");
  std::vector<std::string> header;
  {
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) header.push_back(f);
  }
  if (header.empty() || header[0] != "t") throw InputError("trajectory CSV must start with 't'");
  // Only the x columns are read; trailing z columns of paired files are skipped.
  Eigen::Index n = 0;
  while (n + 1 < Eigen::Index(header.size()) && header[n + 1] == "x" + std::to_string(n)) ++n;
  if (n == 0) throw InputError("trajectory CSV has no x0 column");

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string f;
    std::vector<double> values;
    while (std::getline(fields, f, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw InputError("trajectory CSV line " + std::to_string(line_no) + ": bad number '" + f +
                         "'");
      }
    }
    if (values.size() != header.size())
      throw InputError("trajectory CSV line " + std::to_string(line_no) + ": wrong column count");
    times.push_back(values[0]);
    rows.emplace_back(values.begin() + 1, values.begin() + 1 + n);
  }
  if (rows.size() < 2) throw InputError("trajectory CSV needs at least two rows");
  Trajectory traj;
  traj.system_id = system_id;
  traj.dt = times[1] - times[0];
  traj.states.resize(Eigen::Index(rows.size()), n);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (Eigen::Index j = 0; j < n; ++j) traj.states(Eigen::Index(t), j) = rows[t][j];
  traj.validate();
  return traj;
}

Trajectory read_trajectory_csv(const std::string& path) {
  return parse_trajectory_csv(read_text_file(path), path);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw InputError(name + " must be a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw InputError(name + " must be a non-empty array of rows");
  Eigen::MatrixXd m(Eigen::Index(j.size()), Eigen::Index(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw InputError(name + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw InputError(name + " has a non-numeric entry");
      m(Eigen::Index(r), Eigen::Index(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw InputError(name + " must be an array");
  Eigen::VectorXd v(Eigen::Index(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(name + " has a non-numeric entry");
    v(Eigen::Index(i)) = j[i].get<double>();
  }
  return v;
}

// ---------------------------------------------------------------------------

json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"window_k", c.window_k},
          {"temperature_tau", c.temperature_tau},
          {"seed", c.seed},
          {"latent_dim", c.latent_dim},
          {"hidden", c.hidden},
          {"mode", to_string(c.mode)}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw InputError("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "lr_decay") c.lr_decay = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "window_k") c.window_k = value.get<int>();
      else if (key == "temperature_tau") c.temperature_tau = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "latent_dim") c.latent_dim = value.get<int>();
      else if (key == "hidden") c.hidden = value.get<std::vector<int>>();
      else if (key == "mode") c.mode = mode_from_string(value.get<std::string>());
      else throw InputError("unknown training config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("bad training config value: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const NormalizationRecord& r) {
  return {{"mean", vector_to_json(r.mean)}, {"std", vector_to_json(r.std)}, {"flagged", r.flagged}};
}

NormalizationRecord normalization_from_json(const json& j) {
  NormalizationRecord r;
  r.mean = vector_from_json(j.at("mean"), "normalization.mean");
  r.std = vector_from_json(j.at("std"), "normalization.std");
  r.flagged = j.at("flagged").get<std::vector<bool>>();
  if (r.std.size() != r.mean.size() || r.flagged.size() != std::size_t(r.mean.size()))
    throw InputError("normalization record fields differ in length");
  return r;
}

json to_json(const MlpParams& mlp) {
  json layers = json::array();
  for (std::size_t i = 0; i < mlp.layers(); ++i)
    layers.push_back({{"weight", matrix_to_json(mlp.weights[i])},
                      {"bias", matrix_to_json(mlp.biases[i])[0]},
                      {"activation", to_string(mlp.activations[i])}});
  return layers;
}

MlpParams mlp_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw InputError(name + " must be a non-empty layer list");
  MlpParams mlp;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string layer = name + "[" + std::to_string(i) + "]";
    mlp.weights.push_back(matrix_from_json(j[i].at("weight"), layer + ".weight"));
    mlp.biases.push_back(vector_from_json(j[i].at("bias"), layer + ".bias").transpose());
    mlp.activations.push_back(activation_from_string(j[i].at("activation").get<std::string>()));
  }
  mlp.validate();
  return mlp;
}

json to_json(const Checkpoint& ck) {
  const KoopmanAutoencoder& m = ck.model;
  json out = {{"format", "infokoop-checkpoint-1"},
              {"mode", to_string(m.mode)},
              {"K", matrix_to_json(m.K)},
              {"encoder", to_json(m.encoder)},
              {"decoder", to_json(m.decoder)},
              {"config", to_json(ck.config)},
              {"seed", ck.config.seed}};
  if (m.mode == Mode::VAE) {
    out["encoder_logvar_head"] = to_json(m.encoder_logvar_head);
    out["transition_logvar"] = matrix_to_json(m.transition_logvar)[0];
  }
  if (ck.normalization) out["normalization"] = to_json(*ck.normalization);
  return out;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "infokoop-checkpoint-1")
      throw InputError("not an infokoop checkpoint");
    Checkpoint ck;
    ck.config = train_config_from_json(j.at("config"));
    KoopmanAutoencoder& m = ck.model;
    m.mode = mode_from_string(j.at("mode").get<std::string>());
    m.K = matrix_from_json(j.at("K"), "K");
    m.encoder = mlp_from_json(j.at("encoder"), "encoder");
    m.decoder = mlp_from_json(j.at("decoder"), "decoder");
    if (m.mode == Mode::VAE) {
      m.encoder_logvar_head = mlp_from_json(j.at("encoder_logvar_head"), "encoder_logvar_head");
      m.transition_logvar =
          vector_from_json(j.at("transition_logvar"), "transition_logvar").transpose();
    }
    m.validate();
    if (j.contains("normalization")) ck.normalization = normalization_from_json(j["normalization"]);
    return ck;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

json to_json(const LinearGaussianKoopman<double>& m) {
  return {{"K", matrix_to_json(m.K)},
          {"Sigma", matrix_to_json(m.Sigma)},
          {"C", matrix_to_json(m.C)},
          {"D", matrix_to_json(m.D)},
          {"R", matrix_to_json(m.R)}};
}

LinearGaussianKoopman<double> linear_gaussian_from_json(const json& j) {
  if (!j.is_object()) throw InputError("model must be a JSON object");
  static const std::set<std::string> keys = {"K", "Sigma", "C", "D", "R"};
  for (const auto& item : j.items())
    if (!keys.count(item.key())) throw InputError("unknown model key '" + item.key() + "'");
  LinearGaussianKoopman<double> m;
  try {
    m.K = matrix_from_json(j.at("K"), "K");
    m.Sigma = matrix_from_json(j.at("Sigma"), "Sigma");
    m.C = matrix_from_json(j.at("C"), "C");
    m.D = matrix_from_json(j.at("D"), "D");
    m.R = matrix_from_json(j.at("R"), "R");
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model: ") + e.what());
  }
  m.validate();
  return m;
}

json to_json(const InfoReport& r) {
  json out = {{"n", r.n},
              {"mi_latent", r.mi_latent},
              {"mi_fast", r.mi_fast},
              {"mi_residual", r.mi_residual},
              {"mi_total", r.mi_total},
              {"vn_entropy", r.vn_entropy},
              {"effective_dim", r.effective_dim},
              {"gap_sum", r.gap_sum},
              {"bound_value", r.bound_value},
              {"identity_residual", r.identity_residual},
              {"identity_correction", r.identity_correction},
              {"cbar", r.cbar}};
  if (r.epsilon_enc) out["epsilon_enc"] = *r.epsilon_enc;
  if (r.epsilon_tra) out["epsilon_tra"] = *r.epsilon_tra;
  if (r.epsilon_rec) out["epsilon_rec"] = *r.epsilon_rec;
  return out;
}

json to_json(const Allocation<double>& a) {
  return {{"p", vector_to_json(a.p)},
          {"budget", a.budget},
          {"mu", a.mu},
          {"gamma", a.gamma},
          {"kkt_residual", a.kkt_residual},
          {"stationarity_residual", a.stationarity_residual},
          {"objective", a.objective},
          {"iterations", a.iterations}};
}

json to_json(const EvalReport& r, bool include_runtime) {
  json nrmse = json::object();
  for (const auto& [h, stats] : r.nrmse)
    nrmse[std::to_string(h)] = {{"mean", stats.mean}, {"variance", stats.variance}};
  json out = {{"horizons", r.horizons},
              {"nrmse", nrmse},
              {"kld", r.kld},
              {"sde", r.sde},
              {"initial_conditions", r.initial_conditions},
              {"normalization", r.normalization},
              {"sde_method", r.sde_method}};
  if (include_runtime) out["runtime_seconds"] = r.runtime_seconds;
  return out;
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.horizons = j.at("horizons").get<std::vector<int>>();
    for (int h : r.horizons) {
      const json& s = j.at("nrmse").at(std::to_string(h));
      r.nrmse[h] = {s.at("mean").get<double>(), s.at("variance").get<double>()};
    }
    r.kld = j.at("kld").get<double>();
    r.sde = j.at("sde").get<double>();
    r.initial_conditions = j.at("initial_conditions").get<int>();
    r.normalization = j.at("normalization").get<std::string>();
    r.sde_method = j.at("sde_method").get<std::string>();
    r.runtime_seconds = j.value("runtime_seconds", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string eval_report_csv(const EvalReport& r) {
  std::string out = "metric,value,variance\n";
  for (int h : r.horizons) {
    const NrmseStats& s = r.nrmse.at(h);
    out += std::to_string(h) + "-NRMSE," + format_double(s.mean) + "," +
           format_double(s.variance) + "\n";
  }
  out += "KLD," + format_double(r.kld) + ",\n";
  out += "SDE," + format_double(r.sde) + ",\n";
  return out;
}

std::string training_log_csv(const std::vector<LossBreakdown>& log) {
  std::string out = "epoch,rec,infonce,koop,vne,total\n";
  for (std::size_t e = 0; e < log.size(); ++e) {
    const LossBreakdown& b = log[e];
    out += std::to_string(e + 1) + "," + format_double(b.rec) + "," + format_double(b.infonce) +
           "," + format_double(b.koopman_consistency) + "," + format_double(b.vne) + "," +
           format_double(b.total) + "\n";
  }
  return out;
}

std::string spectrum_csv(const std::vector<SpectrumEntry>& spectrum) {
  std::string out = "re,im,modulus\n";
  for (const SpectrumEntry& e : spectrum)
    out += format_double(e.value.real()) + "," + format_double(e.value.imag()) + "," +
           format_double(e.modulus) + "\n";
  return out;
}

}  // namespace infokoop
