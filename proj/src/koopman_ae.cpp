#include "infokoop/koopman_ae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

#include "infokoop/errors.hpp"

namespace infokoop {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kVarianceFloor = 1e-8;

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::AE ? "ae" : "vae"; }

Mode mode_from_string(const std::string& name) {
  if (name == "ae") return Mode::AE;
  if (name == "vae") return Mode::VAE;
  throw InputError("unknown mode '" + name + "' (expected ae or vae)");
}

std::string to_string(Activation activation) {
  return activation == Activation::Relu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw InputError("unknown activation '" + name + "'");
}

std::string to_string(LossTerm term) {
  switch (term) {
    case LossTerm::Total: return "total";
    case LossTerm::Rec: return "rec";
    case LossTerm::InfoNce: return "infonce";
    case LossTerm::Koopman: return "koop";
    case LossTerm::Vne: return "vne";
    case LossTerm::Elbo: return "elbo";
    case LossTerm::Structural: return "structural";
    case LossTerm::EncoderEntropy: return "encoder_entropy";
  }
  return "total";
}

std::vector<LossTerm> loss_terms(Mode mode) {
  if (mode == Mode::AE)
    return {LossTerm::Rec, LossTerm::InfoNce, LossTerm::Koopman, LossTerm::Vne, LossTerm::Total};
  return {LossTerm::Rec,        LossTerm::InfoNce,        LossTerm::Vne,  LossTerm::Elbo,
          LossTerm::Structural, LossTerm::EncoderEntropy, LossTerm::Total};
}

// ---------------------------------------------------------------------------

void MlpParams::validate() const {
  if (weights.empty()) throw InputError("MLP has no layers");
  if (biases.size() != weights.size() || activations.size() != weights.size())
    throw InputError("MLP layer lists differ in length");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (biases[i].rows() != 1 || biases[i].cols() != weights[i].cols())
      throw InputError("MLP bias " + std::to_string(i) + " has wrong shape");
    if (i > 0 && weights[i].rows() != weights[i - 1].cols())
      throw InputError("MLP layer " + std::to_string(i) + " does not chain");
    if (!weights[i].allFinite() || !biases[i].allFinite())
      throw InputError("MLP layer " + std::to_string(i) + " has non-finite entries");
  }
}

Eigen::MatrixXd MlpParams::forward(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim()) throw InputError("MLP input has wrong dimension");
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = (h * weights[i]).rowwise() + biases[i].row(0);
    if (activations[i] == Activation::Relu) h = h.cwiseMax(0.0);
  }
  return h;
}

MlpParams make_mlp(const std::vector<int>& widths, CounterRng& rng) {
  if (widths.size() < 2) throw InputError("MLP needs at least input and output widths");
  for (int w : widths)
    if (w < 1) throw InputError("MLP widths must be positive");
  MlpParams mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    // He scaling ahead of a ReLU, unit-gain scaling on the linear output.
    const double scale = std::sqrt((last ? 1.0 : 2.0) / widths[i]);
    mlp.weights.push_back(scale * rng.normal_matrix(widths[i], widths[i + 1]));
    mlp.biases.push_back(Eigen::MatrixXd::Zero(1, widths[i + 1]));
    mlp.activations.push_back(last ? Activation::Identity : Activation::Relu);
  }
  return mlp;
}

void KoopmanAutoencoder::validate() const {
  encoder.validate();
  decoder.validate();
  const Eigen::Index d = K.rows();
  if (d < 1 || K.cols() != d) throw InputError("K must be square");
  if (encoder.output_dim() != d) throw InputError("encoder output dimension differs from K");
  if (decoder.input_dim() != d) throw InputError("decoder input dimension differs from K");
  if (decoder.output_dim() != encoder.input_dim())
    throw InputError("decoder output dimension differs from encoder input");
  if (!K.allFinite()) throw InputError("K has non-finite entries");
  if (mode == Mode::VAE) {
    encoder_logvar_head.validate();
    if (encoder_logvar_head.input_dim() != encoder.input_dim() ||
        encoder_logvar_head.output_dim() != d)
      throw InputError("encoder log-variance head has wrong shape");
    if (transition_logvar.rows() != 1 || transition_logvar.cols() != d)
      throw InputError("transition log-variance must be 1 x d");
  }
}

std::vector<const Eigen::MatrixXd*> KoopmanAutoencoder::parameters() const {
  std::vector<const Eigen::MatrixXd*> out;
  auto add = [&out](const MlpParams& mlp) {
    for (std::size_t i = 0; i < mlp.layers(); ++i) {
      out.push_back(&mlp.weights[i]);
      out.push_back(&mlp.biases[i]);
    }
  };
  add(encoder);
  add(decoder);
  out.push_back(&K);
  if (mode == Mode::VAE) {
    add(encoder_logvar_head);
    out.push_back(&transition_logvar);
  }
  return out;
}

std::vector<Eigen::MatrixXd*> KoopmanAutoencoder::parameters() {
  std::vector<Eigen::MatrixXd*> out;
  for (const Eigen::MatrixXd* p : std::as_const(*this).parameters())
    out.push_back(const_cast<Eigen::MatrixXd*>(p));
  return out;
}

std::vector<std::string> KoopmanAutoencoder::parameter_names() const {
  std::vector<std::string> out;
  auto add = [&out](const MlpParams& mlp, const std::string& prefix) {
    for (std::size_t i = 0; i < mlp.layers(); ++i) {
      out.push_back(prefix + "." + std::to_string(i) + ".weight");
      out.push_back(prefix + "." + std::to_string(i) + ".bias");
    }
  };
  add(encoder, "encoder");
  add(decoder, "decoder");
  out.push_back("K");
  if (mode == Mode::VAE) {
    add(encoder_logvar_head, "encoder_logvar_head");
    out.push_back("transition_logvar");
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0))
    throw InputError("alpha, beta and gamma must be >= 0");
  if (!(lr > 0.0)) throw InputError("lr must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw InputError("lr_decay must lie in (0, 1]");
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (window_k < 1) throw InputError("window_k must be >= 1");
  if (batch < 2 * window_k + 2)
    throw InputError("batch must be >= 2 * window_k + 2 so InfoNCE has negatives");
  if (!(temperature_tau > 0.0)) throw InputError("temperature_tau must be positive");
  if (latent_dim < 1) throw InputError("latent_dim must be >= 1");
  for (int h : hidden)
    if (h < 1) throw InputError("hidden widths must be positive");
}

double LossBreakdown::combined(const TrainConfig& config) const {
  if (mode == Mode::AE)
    return rec - config.alpha * infonce + config.beta * koopman_consistency - config.gamma * vne;
  return rec - config.alpha * infonce - config.beta * structural - config.beta * encoder_entropy -
         config.gamma * vne - elbo;
}

KoopmanAutoencoder init_model(Eigen::Index state_dim, const TrainConfig& config) {
  config.validate();
  if (state_dim < 1) throw InputError("state dimension must be >= 1");
  CounterRng rng(config.seed, 7);
  const int n = int(state_dim);
  const int d = config.latent_dim;
  std::vector<int> enc = {n};
  enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
  enc.push_back(d);
  std::vector<int> dec = {d};
  dec.insert(dec.end(), config.hidden.rbegin(), config.hidden.rend());
  dec.push_back(n);

  KoopmanAutoencoder model;
  model.mode = config.mode;
  model.encoder = make_mlp(enc, rng);
  model.decoder = make_mlp(dec, rng);
  model.K = Eigen::MatrixXd::Identity(d, d);
  if (config.mode == Mode::VAE) {
    model.encoder_logvar_head = make_mlp(enc, rng);
    // Start with small encoder noise.
    model.encoder_logvar_head.weights.back().setZero();
    model.encoder_logvar_head.biases.back().setConstant(-4.0);
    model.transition_logvar = Eigen::MatrixXd::Constant(1, d, -2.0);
  }
  return model;
}

Eigen::MatrixXd encode_batch(const KoopmanAutoencoder& model, const Eigen::MatrixXd& x) {
  return model.encoder.forward(x);
}

Eigen::VectorXd encode(const KoopmanAutoencoder& model, const Eigen::VectorXd& x) {
  return model.encoder.forward(x.transpose()).row(0).transpose();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> encode_distribution(const KoopmanAutoencoder& model,
                                                                const Eigen::VectorXd& x) {
  if (model.mode != Mode::VAE) throw InputError("encode_distribution needs a VAE model");
  return {encode(model, x), model.encoder_logvar_head.forward(x.transpose()).row(0).transpose()};
}

Eigen::VectorXd decode(const KoopmanAutoencoder& model, const Eigen::VectorXd& z) {
  return model.decoder.forward(z.transpose()).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Loss pieces.

ad::Var infonce_temporal(const ad::Var& latents, int window_k, double tau) {
  const Eigen::Index b = latents.rows();
  if (window_k < 1) throw InputError("infonce: window_k must be >= 1");
  if (!(tau > 0.0)) throw InputError("infonce: tau must be positive");
  if (b < 2 * window_k + 2) throw InputError("infonce: batch must be >= 2 * window_k + 2");
  // Weight 1/(B |P_n|) on each in-range positive of anchor n.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index n = 0; n < b; ++n) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, n - window_k);
    const Eigen::Index hi = std::min<Eigen::Index>(b - 1, n + window_k);
    const double count = double(hi - lo);  // excludes the anchor
    for (Eigen::Index p = lo; p <= hi; ++p)
      if (p != n) w(n, p) = 1.0 / (double(b) * count);
  }
  const ad::Var scores = (1.0 / tau) * (latents * ad::transpose(latents));
  const ad::Var lse = ad::row_logsumexp(scores);
  return ad::weighted_sum(scores, w) - ad::weighted_sum(lse, w.rowwise().sum());
}

ad::Var koopman_consistency(const ad::Var& latents, const ad::Var& k) {
  const Eigen::Index b = latents.rows();
  if (b < 2) throw InputError("koopman_consistency needs at least two latents");
  if (k.rows() != latents.cols() || k.cols() != latents.cols())
    throw InputError("koopman_consistency: K has wrong shape");
  const ad::Var predicted = ad::rows(latents, 0, b - 1) * ad::transpose(k);
  const ad::Var residual = ad::rows(latents, 1, b - 1) - predicted;
  return (1.0 / double(b - 1)) * ad::sum(ad::square(residual));
}

ad::Var batch_covariance(const ad::Var& latents) {
  if (latents.rows() < 2) throw InputError("batch covariance needs at least two latents");
  const ad::Var centered = ad::sub_row(latents, ad::column_mean(latents));
  return (1.0 / double(latents.rows())) * (ad::transpose(centered) * centered);
}

double infonce_temporal(const Eigen::MatrixXd& latents, int window_k, double tau) {
  ad::Tape tape;
  return infonce_temporal(tape.constant(latents), window_k, tau).scalar();
}

double koopman_consistency(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& k) {
  ad::Tape tape;
  return koopman_consistency(tape.constant(latents), tape.constant(k)).scalar();
}

BatchEntropy batch_vne(const Eigen::MatrixXd& latents) {
  ad::Tape tape;
  const ad::Var cov = batch_covariance(tape.constant(latents));
  BatchEntropy out;
  out.entropy = ad::trace_normalized_entropy(cov, &out.degenerate).scalar();
  const double trace = cov.value().trace();
  out.normalized_covariance =
      out.degenerate ? Eigen::MatrixXd(Eigen::MatrixXd::Zero(cov.rows(), cov.cols()))
                     : Eigen::MatrixXd(cov.value() / trace);
  return out;
}

// ---------------------------------------------------------------------------
// Full losses on a tape.

namespace {

struct LossVars {
  ad::Var total, rec, infonce, koop, vne, elbo, structural, encoder_entropy;
};

ad::Var mlp_forward(const MlpParams& mlp, const std::vector<ad::Var>& vars, std::size_t& cursor,
                    ad::Var h) {
  for (std::size_t i = 0; i < mlp.layers(); ++i) {
    h = ad::add_row(h * vars[cursor], vars[cursor + 1]);
    cursor += 2;
    if (mlp.activations[i] == Activation::Relu) h = ad::relu(h);
  }
  return h;
}

LossVars build_loss(ad::Tape& tape, const KoopmanAutoencoder& model,
                    const std::vector<ad::Var>& vars, const Eigen::MatrixXd& batch,
                    const TrainConfig& config, std::uint64_t seed, LossBreakdown& out) {
  const Eigen::Index b = batch.rows();
  const Eigen::Index n = batch.cols();
  const Eigen::Index d = model.latent_dim();
  if (n != model.state_dim()) throw InputError("batch state dimension differs from the model");
  if (b < 2 * config.window_k + 2)
    throw InputError("batch must hold at least 2 * window_k + 2 steps");

  std::size_t cursor = 0;
  const ad::Var x = tape.constant(batch);
  LossVars loss;
  out.mode = model.mode;

  if (model.mode == Mode::AE) {
    const ad::Var z = mlp_forward(model.encoder, vars, cursor, x);
    const ad::Var x_hat = mlp_forward(model.decoder, vars, cursor, z);
    const ad::Var k = vars[cursor++];
    loss.rec = (1.0 / double(b)) * ad::sum(ad::square(x - x_hat));
    loss.infonce = infonce_temporal(z, config.window_k, config.temperature_tau);
    loss.koop = koopman_consistency(z, k);
    loss.vne = ad::trace_normalized_entropy(batch_covariance(z), &out.vne_degenerate);
    loss.total = loss.rec - config.alpha * loss.infonce + config.beta * loss.koop -
                 config.gamma * loss.vne;
  } else {
    const ad::Var mean = mlp_forward(model.encoder, vars, cursor, x);
    std::size_t decoder_cursor = cursor;
    cursor += 2 * model.decoder.layers();
    const ad::Var k = vars[cursor++];
    const ad::Var logvar = mlp_forward(model.encoder_logvar_head, vars, cursor, x);
    const ad::Var transition_logvar = vars[cursor++];

    int clips = 0, transition_clips = 0;
    const ad::Var var = ad::clamp_min(ad::exp(logvar), kVarianceFloor, &clips);
    CounterRng rng(seed, 3);
    const ad::Var noise = tape.constant(rng.normal_matrix(b, d));
    const ad::Var z = mean + ad::hadamard(ad::sqrt(var), noise);
    const ad::Var x_hat = mlp_forward(model.decoder, vars, decoder_cursor, z);

    // -log p(x|z) under a unit-variance Gaussian decoder, per sample.
    loss.rec = ad::add_scalar((0.5 / double(b)) * ad::sum(ad::square(x - x_hat)),
                              0.5 * double(n) * kLog2Pi);

    // E_p[log N(z_n; K z_{n-1}, diag(s))] over consecutive pairs.
    const ad::Var s =
        ad::clamp_min(ad::exp(transition_logvar), kVarianceFloor, &transition_clips);
    const ad::Var predicted = ad::rows(z, 0, b - 1) * ad::transpose(k);
    const ad::Var spread =
        ad::square(ad::rows(mean, 1, b - 1) - predicted) + ad::rows(var, 1, b - 1);
    const ad::Var quad = (1.0 / double(b - 1)) * ad::sum(ad::mul_row(spread, ad::reciprocal(s)));
    loss.structural =
        -0.5 * ad::add_scalar(quad + ad::sum(ad::log(s)), double(d) * kLog2Pi);

    const ad::Var sum_log_var = (1.0 / double(b)) * ad::sum(ad::log(var));
    loss.encoder_entropy = ad::add_scalar(0.5 * sum_log_var, 0.5 * double(d) * (1.0 + kLog2Pi));

    // KL(N(mean, var) || N(0, I)) per sample.
    const ad::Var kl = ad::add_scalar(
        (0.5 / double(b)) * ad::sum(var + ad::square(mean)) - 0.5 * sum_log_var, -0.5 * double(d));
    loss.elbo = -loss.rec - kl;

    loss.infonce = infonce_temporal(z, config.window_k, config.temperature_tau);
    loss.vne = ad::trace_normalized_entropy(batch_covariance(z), &out.vne_degenerate);
    loss.total = loss.rec - config.alpha * loss.infonce - config.beta * loss.structural -
                 config.beta * loss.encoder_entropy - config.gamma * loss.vne - loss.elbo;
    out.variance_clips = clips + transition_clips;
    out.structural = loss.structural.scalar();
    out.encoder_entropy = loss.encoder_entropy.scalar();
    out.elbo = loss.elbo.scalar();
    // Pure AE consistency of the sampled latents, for the training log.
    out.koopman_consistency = koopman_consistency(z.value(), k.value());
  }
  out.rec = loss.rec.scalar();
  out.infonce = loss.infonce.scalar();
  if (model.mode == Mode::AE) out.koopman_consistency = loss.koop.scalar();
  out.vne = loss.vne.scalar();
  out.total = loss.total.scalar();
  return loss;
}

std::vector<ad::Var> bind_parameters(ad::Tape& tape, const KoopmanAutoencoder& model) {
  std::vector<ad::Var> vars;
  for (const Eigen::MatrixXd* p : model.parameters()) vars.push_back(tape.variable(*p));
  return vars;
}

ad::Var select(const LossVars& loss, LossTerm term, Mode mode) {
  const bool vae_only = term == LossTerm::Elbo || term == LossTerm::Structural ||
                        term == LossTerm::EncoderEntropy;
  if (vae_only && mode != Mode::VAE)
    throw InputError("loss term " + to_string(term) + " exists only in VAE mode");
  if (term == LossTerm::Koopman && mode != Mode::AE)
    throw InputError("the deterministic consistency term exists only in AE mode");
  switch (term) {
    case LossTerm::Total: return loss.total;
    case LossTerm::Rec: return loss.rec;
    case LossTerm::InfoNce: return loss.infonce;
    case LossTerm::Koopman: return loss.koop;
    case LossTerm::Vne: return loss.vne;
    case LossTerm::Elbo: return loss.elbo;
    case LossTerm::Structural: return loss.structural;
    case LossTerm::EncoderEntropy: return loss.encoder_entropy;
  }
  return loss.total;
}

}  // namespace

LossBreakdown total_loss_ae(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                            const TrainConfig& config) {
  if (model.mode != Mode::AE) throw InputError("total_loss_ae needs an AE model");
  ad::Tape tape;
  LossBreakdown out;
  build_loss(tape, model, bind_parameters(tape, model), batch, config, 0, out);
  return out;
}

LossBreakdown total_loss_vae(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                             const TrainConfig& config, std::uint64_t seed) {
  if (model.mode != Mode::VAE) throw InputError("total_loss_vae needs a VAE model");
  ad::Tape tape;
  LossBreakdown out;
  build_loss(tape, model, bind_parameters(tape, model), batch, config, seed, out);
  return out;
}

GradientResult gradients(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                         const TrainConfig& config, std::uint64_t seed, LossTerm term) {
  ad::Tape tape;
  const std::vector<ad::Var> vars = bind_parameters(tape, model);
  GradientResult result;
  const LossVars loss = build_loss(tape, model, vars, batch, config, seed, result.loss);
  const ad::Var root = select(loss, term, model.mode);
  result.value = root.scalar();
  tape.backward(root);
  for (const ad::Var& v : vars) result.grads.push_back(v.grad());
  return result;
}

double loss_value(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                  const TrainConfig& config, std::uint64_t seed, LossTerm term) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Eigen::MatrixXd* p : model.parameters()) vars.push_back(tape.constant(*p));
  LossBreakdown unused;
  return select(build_loss(tape, model, vars, batch, config, seed, unused), term, model.mode)
      .scalar();
}

namespace {

// On/off state of every ReLU and variance clamp in the loss graph.
std::vector<bool> activation_pattern(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                                     std::uint64_t seed) {
  std::vector<bool> pattern;
  auto run = [&pattern](const MlpParams& mlp, Eigen::MatrixXd h) {
    for (std::size_t i = 0; i < mlp.layers(); ++i) {
      h = (h * mlp.weights[i]).rowwise() + mlp.biases[i].row(0);
      if (mlp.activations[i] == Activation::Relu) {
        for (Eigen::Index k = 0; k < h.size(); ++k) pattern.push_back(h.data()[k] > 0.0);
        h = h.cwiseMax(0.0);
      }
    }
    return h;
  };
  const Eigen::MatrixXd mean = run(model.encoder, batch);
  if (model.mode == Mode::AE) {
    run(model.decoder, mean);
    return pattern;
  }
  const Eigen::MatrixXd raw_var = run(model.encoder_logvar_head, batch).array().exp();
  for (Eigen::Index k = 0; k < raw_var.size(); ++k)
    pattern.push_back(raw_var.data()[k] >= kVarianceFloor);
  const Eigen::MatrixXd s = model.transition_logvar.array().exp();
  for (Eigen::Index k = 0; k < s.size(); ++k) pattern.push_back(s.data()[k] >= kVarianceFloor);
  CounterRng rng(seed, 3);
  const Eigen::MatrixXd noise = rng.normal_matrix(batch.rows(), model.latent_dim());
  const Eigen::MatrixXd z =
      mean + raw_var.cwiseMax(kVarianceFloor).cwiseSqrt().cwiseProduct(noise);
  run(model.decoder, z);
  return pattern;
}

}  // namespace

GradCheckResult gradient_check(const KoopmanAutoencoder& model, const Eigen::MatrixXd& batch,
                               const TrainConfig& config, std::uint64_t seed, LossTerm term,
                               double step) {
  if (!(step > 0.0)) throw InputError("gradient_check: step must be positive");
  const GradientResult analytic = gradients(model, batch, config, seed, term);
  const std::vector<bool> base_pattern = activation_pattern(model, batch, seed);
  const double f0 = analytic.value;
  const double floor = kGradCheckFloor * std::max(1.0, std::abs(f0));
  const std::vector<std::string> names = model.parameter_names();

  KoopmanAutoencoder probe = model;
  std::vector<Eigen::MatrixXd*> params = probe.parameters();
  GradCheckResult result;
  result.term = term;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckParameter stats;
    stats.name = names[p];
    Eigen::MatrixXd& theta = *params[p];
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double original = theta.data()[k];
      auto evaluate_at = [&](double value, bool& same_pattern) {
        theta.data()[k] = value;
        same_pattern = activation_pattern(probe, batch, seed) == base_pattern;
        const double f = loss_value(probe, batch, config, seed, term);
        theta.data()[k] = original;
        return f;
      };
      std::optional<double> numeric;
      for (double h = step; h >= step * 1e-4 && !numeric; h *= 0.01) {
        bool plus_ok = false, minus_ok = false;
        const double f_plus = evaluate_at(original + h, plus_ok);
        const double f_minus = evaluate_at(original - h, minus_ok);
        if (plus_ok && minus_ok) {
          numeric = (f_plus - f_minus) / (2.0 * h);
        } else if (plus_ok) {
          numeric = (f_plus - f0) / h;
          ++stats.one_sided;
        } else if (minus_ok) {
          numeric = (f0 - f_minus) / h;
          ++stats.one_sided;
        }
      }
      ++stats.entries;
      if (!numeric) {
        ++stats.skipped;
        continue;
      }
      const double a = analytic.grads[p].data()[k];
      const double abs_error = std::abs(a - *numeric);
      const double rel_error =
          abs_error / std::max({std::abs(a), std::abs(*numeric), floor});
      stats.max_abs_error = std::max(stats.max_abs_error, abs_error);
      stats.max_rel_error = std::max(stats.max_rel_error, rel_error);
    }
    result.max_rel_error = std::max(result.max_rel_error, stats.max_rel_error);
    result.skipped += stats.skipped;
    result.parameters.push_back(stats);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

struct Window {
  std::size_t trajectory;
  Eigen::Index start;
};

bool all_finite(const std::vector<Eigen::MatrixXd>& grads) {
  for (const Eigen::MatrixXd& g : grads)
    if (!g.allFinite()) return false;
  return true;
}

void accumulate(LossBreakdown& into, const LossBreakdown& x) {
  into.rec += x.rec;
  into.infonce += x.infonce;
  into.koopman_consistency += x.koopman_consistency;
  into.vne += x.vne;
  into.elbo += x.elbo;
  into.structural += x.structural;
  into.encoder_entropy += x.encoder_entropy;
  into.total += x.total;
  into.vne_degenerate = into.vne_degenerate || x.vne_degenerate;
  into.variance_clips += x.variance_clips;
}

void scale(LossBreakdown& b, double s) {
  b.rec *= s;
  b.infonce *= s;
  b.koopman_consistency *= s;
  b.vne *= s;
  b.elbo *= s;
  b.structural *= s;
  b.encoder_entropy *= s;
  b.total *= s;
}

}  // namespace

TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& config,
                  const KoopmanAutoencoder* initial) {
  config.validate();
  if (dataset.empty()) throw InputError("training needs at least one trajectory");
  const Eigen::Index n = dataset.front().dim();
  std::vector<Window> windows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset[i].validate();
    if (dataset[i].dim() != n) throw InputError("trajectories differ in state dimension");
    for (Eigen::Index start = 0; start + config.batch <= dataset[i].states.rows();
         start += config.batch)
      windows.push_back({i, start});
  }
  if (windows.empty()) throw InputError("every trajectory is shorter than one batch");

  TrainResult result;
  result.model = initial ? *initial : init_model(n, config);
  result.model.validate();
  if (result.model.state_dim() != n) throw InputError("model state dimension differs from data");
  if (result.model.mode != config.mode) throw InputError("model mode differs from config");

  KoopmanAutoencoder model = result.model;
  std::vector<Eigen::MatrixXd*> params = model.parameters();
  std::vector<Eigen::MatrixXd> m1, m2;
  for (const Eigen::MatrixXd* p : params) {
    m1.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    m2.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CounterRng shuffle_rng(config.seed, 1000 + std::uint64_t(epoch));
    std::vector<Window> order = windows;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

    const double lr = config.lr * std::pow(config.lr_decay, epoch);
    LossBreakdown epoch_loss;
    epoch_loss.mode = config.mode;
    for (const Window& w : order) {
      const Eigen::MatrixXd batch =
          dataset[w.trajectory].states.middleRows(w.start, config.batch);
      const std::uint64_t noise_seed = config.seed * 0x9E3779B97F4A7C15ull + std::uint64_t(step);
      const GradientResult g = gradients(model, batch, config, noise_seed, LossTerm::Total);
      if (!std::isfinite(g.value) || !all_finite(g.grads)) {
        result.diverged = true;
        result.message = "non-finite loss or gradient at epoch " + std::to_string(epoch + 1) +
                         ", step " + std::to_string(step + 1);
        return result;
      }
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, double(step));
      const double c2 = 1.0 - std::pow(kBeta2, double(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g.grads[i];
        m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g.grads[i].cwiseProduct(g.grads[i]);
        params[i]->array() -=
            lr * (m1[i].array() / c1) / ((m2[i].array() / c2).sqrt() + kEps);
      }
      accumulate(epoch_loss, g.loss);
    }
    scale(epoch_loss, 1.0 / double(order.size()));
    bool finite = true;
    for (const Eigen::MatrixXd* p : params) finite = finite && p->allFinite();
    if (!finite) {
      result.diverged = true;
      result.message = "parameters became non-finite in epoch " + std::to_string(epoch + 1);
      return result;
    }
    result.log.push_back(epoch_loss);
    result.model = model;
  }
  return result;
}

Trajectory rollout(const KoopmanAutoencoder& model, const Eigen::VectorXd& x0, int steps,
                   double dt) {
  model.validate();
  if (steps < 1) throw InputError("rollout: steps must be >= 1");
  if (x0.size() != model.state_dim()) throw InputError("rollout: x0 has wrong dimension");
  Trajectory out;
  out.dt = dt;
  out.system_id = "rollout";
  out.states.resize(steps + 1, x0.size());
  out.states.row(0) = x0.transpose();
  // Latents for all steps first, then one batched decode.
  Eigen::MatrixXd latents(steps, model.latent_dim());
  Eigen::VectorXd z = encode(model, x0);
  for (int t = 0; t < steps; ++t) {
    z = model.K * z;
    latents.row(t) = z.transpose();
  }
  out.states.bottomRows(steps) = model.decoder.forward(latents);
  return out;
}

std::vector<SpectrumEntry> koopman_spectrum(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.rows() == 0) throw InputError("spectrum: K must be square");
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(k, false);
  if (solver.info() != Eigen::Success) throw NumericError("spectrum: eigenvalue solver failed");
  std::vector<SpectrumEntry> out;
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    const std::complex<double> value = solver.eigenvalues()(i);
    out.push_back({value, std::abs(value)});
  }
  std::sort(out.begin(), out.end(), [](const SpectrumEntry& a, const SpectrumEntry& b) {
    if (a.modulus != b.modulus) return a.modulus > b.modulus;
    return a.value.imag() > b.value.imag();
  });
  return out;
}

}  // namespace infokoop
