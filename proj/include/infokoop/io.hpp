#pragma once

// File formats: trajectory CSV, JSON checkpoints, reports.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "infokoop/allocation.hpp"
#include "infokoop/dynamics.hpp"
#include "infokoop/evaluation.hpp"
#include "infokoop/gaussian_info.hpp"
#include "infokoop/koopman_ae.hpp"

namespace infokoop {

using json = nlohmann::json;

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// %.17g, so every double survives a text round trip.
std::string format_double(double value);

// Header `t,x0,...`; t = step * dt.
std::string trajectory_csv(const Trajectory& traj);
// Adds `z0,...` after the state columns.
std::string paired_csv(const PairedLatentTrajectory& traj);
Trajectory parse_trajectory_csv(const std::string& text, const std::string& system_id = "csv");
Trajectory read_trajectory_csv(const std::string& path);

json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& name);

json to_json(const TrainConfig& config);
// Strict: unknown keys are rejected; missing keys keep `base` values.
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

json to_json(const NormalizationRecord& record);
NormalizationRecord normalization_from_json(const json& j);

json to_json(const MlpParams& mlp);
MlpParams mlp_from_json(const json& j, const std::string& name);

struct Checkpoint {
  KoopmanAutoencoder model;
  TrainConfig config;
  std::optional<NormalizationRecord> normalization;
};
json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const json& j);

json to_json(const LinearGaussianKoopman<double>& model);
LinearGaussianKoopman<double> linear_gaussian_from_json(const json& j);

json to_json(const InfoReport& report);
json to_json(const Allocation<double>& allocation);
json to_json(const EvalReport& report, bool include_runtime);
EvalReport eval_report_from_json(const json& j);
// Rows `metric,value,variance`.
std::string eval_report_csv(const EvalReport& report);

std::string training_log_csv(const std::vector<LossBreakdown>& log);
std::string spectrum_csv(const std::vector<SpectrumEntry>& spectrum);

}  // namespace infokoop
