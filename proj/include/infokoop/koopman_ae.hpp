#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infokoop/autodiff.hpp"
#include "infokoop/dynamics.hpp"

namespace infokoop {

enum class Mode { AE, VAE };
enum class Activation { Relu, Identity };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);
std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

// Row-batch MLP: h <- act(h W + b), with W stored in x out and b as 1 x out.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::MatrixXd> biases;
  std::vector<Activation> activations;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
  std::size_t layers() const { return weights.size(); }
  void validate() const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
};

// widths = {in, hidden..., out}; ReLU between layers, identity at the end.
MlpParams make_mlp(const std::vector<int>& widths, CounterRng& rng);

struct KoopmanAutoencoder {
  MlpParams encoder;
  MlpParams decoder;
  Eigen::MatrixXd K;
  Mode mode = Mode::AE;
  MlpParams encoder_logvar_head;     // VAE only
  Eigen::MatrixXd transition_logvar;  // VAE only, 1 x d

  Eigen::Index latent_dim() const { return K.rows(); }
  Eigen::Index state_dim() const { return encoder.input_dim(); }
  void validate() const;

  // Every trainable tensor in a fixed order, with stable names.
  std::vector<Eigen::MatrixXd*> parameters();
  std::vector<const Eigen::MatrixXd*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

struct TrainConfig {
  double alpha = 2.0;
  double beta = 1.0;
  double gamma = 0.1;
  double lr = 1e-3;
  // Per-epoch multiplicative learning-rate decay; 1 keeps Adam's step fixed.
  double lr_decay = 1.0;
  int epochs = 50;
  int batch = 64;
  int window_k = 3;
  double temperature_tau = 0.1;
  std::uint64_t seed = 0;
  int latent_dim = 16;
  std::vector<int> hidden = {64, 64};
  Mode mode = Mode::AE;

  void validate() const;
};

struct LossBreakdown {
  double rec = 0;
  double infonce = 0;
  double koopman_consistency = 0;
  double vne = 0;
  double elbo = 0;             // VAE only
  double structural = 0;       // VAE only
  double encoder_entropy = 0;  // VAE only
  double total = 0;
  Mode mode = Mode::AE;
  bool vne_degenerate = false;
  int variance_clips = 0;

  // The signed combination of the fields for the active mode.
  double combined(const TrainConfig& config) const;
};

enum class LossTerm { Total, Rec, InfoNce, Koopman, Vne, Elbo, Structural, EncoderEntropy };
std::string to_string(LossTerm term);
std::vector<LossTerm> loss_terms(Mode mode);

KoopmanAutoencoder init_model(Eigen::Index state_dim, const TrainConfig& config);

Eigen::VectorXd encode(const KoopmanAutoencoder& model, const Eigen::VectorXd& x);
// VAE encoder distribution: (mean, log-variance).
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode_distribution(const KoopmanAutoencoder& model,
                                                                const Eigen::VectorXd& x);
Eigen::VectorXd decode(const KoopmanAutoencoder& model, const Eigen::VectorXd& z);
// Rows in, rows out; VAE mode returns encoder means.
Eigen::MatrixXd encode_batch(const KoopmanAutoencoder& model, const Eigen::MatrixXd& x);

// Loss pieces on the tape, for reuse inside the total losses.
ad::Var infonce_temporal(const ad::Var& latents, int window_k, double tau);
ad::Var koopman_consistency(const ad::Var& latents, const ad::Var& k);
ad::Var batch_covariance(const ad::Var& latents);

double infonce_temporal(const Eigen::MatrixXd& latents, int window_k, double tau);
double koopman_consistency(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& k);

struct BatchEntropy {
  double entropy = 0;
  Eigen::MatrixXd normalized_covariance;
  bool degenerate = false;
};
BatchEntropy batch_vne(const Eigen::MatrixXd& latents);

LossBreakdown total_loss_ae(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                            const TrainConfig& config);
LossBreakdown total_loss_vae(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                             const TrainConfig& config, std::uint64_t seed);

struct GradientResult {
  LossBreakdown loss;
  double value = 0;  // the differentiated term
  std::vector<Eigen::MatrixXd> grads;  // aligned with parameters()
};

// Exact reverse-mode gradient of one loss term (or the total). `seed` drives
// the VAE reparameterization noise and is ignored in AE mode.
GradientResult gradients(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                         const TrainConfig& config, std::uint64_t seed = 0,
                         LossTerm term = LossTerm::Total);

// Value of one loss term without a backward pass.
double loss_value(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                  const TrainConfig& config, std::uint64_t seed, LossTerm term);

struct GradCheckParameter {
  std::string name;
  double max_rel_error = 0;
  double max_abs_error = 0;
  int entries = 0;
  int one_sided = 0;  // entries where a ReLU or clamp switched on one side
  int skipped = 0;    // entries where it switched on both sides at every step tried
};

struct GradCheckResult {
  LossTerm term = LossTerm::Total;
  double max_rel_error = 0;
  std::vector<GradCheckParameter> parameters;
  int skipped = 0;
};

// Relative error of an entry: |analytic - numeric| / max(|analytic|, |numeric|, floor),
// with floor = kGradCheckFloor * max(1, |loss|) so entries below the
// difference quotient's roundoff level are judged in absolute terms.
inline constexpr double kGradCheckFloor = 1e-6;

// Compares every parameter gradient with central finite differences of
// `step`. When a ReLU or variance clamp changes state on one side of the
// stencil the other side's one-sided difference is used instead.
GradCheckResult gradient_check(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                               const TrainConfig& config, std::uint64_t seed, LossTerm term,
                               double step = 1e-5);

struct TrainResult {
  KoopmanAutoencoder model;
  std::vector<LossBreakdown> log;  // per-epoch mean over batches
  bool diverged = false;
  std::string message;
};

// Trains on contiguous windows of `config.batch` steps cut from every
// trajectory; windows are shuffled each epoch. The data should already be
// normalized. On a non-finite loss or gradient the last good model is
// returned with diverged = true.
TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& config,
                  const KoopmanAutoencoder* initial = nullptr);

// Encodes x0 once, applies K repeatedly and decodes each step. Row 0 is x0.
Trajectory rollout(const KoopmanAutoencoder& model, const Eigen::VectorXd& x0, int steps,
                   double dt = 1.0);

struct SpectrumEntry {
  std::complex<double> value;
  double modulus = 0;
};
// Eigenvalues sorted by descending modulus, then by imaginary part.
std::vector<SpectrumEntry> koopman_spectrum(const Eigen::MatrixXd& k);

}  // namespace infokoop
