#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgpbae/datasets.hpp"
#include "sgpbae/sghmc.hpp"
#include "sgpbae/sparse_gp.hpp"

namespace sgpbae {

enum class Activation { Tanh, Relu, Elu };
enum class ModelKind { Bae, GpBae, SgpBae, DeepSgpBae };

struct MlpLayer {
  RowMat w;            // in x out
  Eigen::VectorXd b;   // out
};

// Fully connected net, linear output layer.
struct Mlp {
  std::vector<Eigen::Index> widths;  // input, hidden..., output
  Activation activation = Activation::Tanh;
  std::vector<MlpLayer> layers;

  static Mlp build(std::vector<Eigen::Index> widths, Activation act);
  void init_weights(Rng& rng);  // N(0, 1/fan_in) entries
  Eigen::Index param_count() const;
  void flatten(Eigen::Ref<Eigen::VectorXd> out) const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& in);
  RowMat forward(const Eigen::Ref<const RowMat>& input) const;
};

// Deterministic map (y, epsilon) -> z; epsilon dimension matches the input
// dimension for flat inputs.
struct EncoderNet {
  Mlp net;
  Eigen::Index seed_dim = 0;
};

struct DecoderNet {
  Mlp net;
  double beta = 100.0;            // observation precision
  double weight_prior_var = 1.0;  // isotropic Gaussian prior on all params
};

struct Batch {
  std::vector<Eigen::Index> indices;  // rows of the dataset, sorted by group
  RowMat y;       // B x P, missing entries stored as zero
  RowMat x;       // B x D
  RowMat mask;    // B x P, 1 observed
  RowMat latent;  // B x C, current latent rows
  std::vector<int> group;  // per-row group id

  static Batch gather(const Dataset& data,
                      const std::vector<Eigen::Index>& indices);
};

struct GpLayerState {
  KernelParams params;
  RowMat s;                // M x D_layer
  std::vector<RowMat> u;   // one M x width block per group
};

struct PosteriorSample {
  Eigen::VectorXd decoder_params;
  std::vector<GpLayerState> gp_layers;  // empty for the iid / dense kinds
  std::int64_t snapshot_id = 0;
};

struct GpSettings {
  KernelKind kernel;
  Eigen::Index num_inducing = 10;
  double sigma2 = 0.01;
  LogNormalPrior lengthscale_prior{0.0, 1.0};
  LogNormalPrior variance_prior{std::log(0.05), 1.0};
  double box_expand = 0.05;
  std::vector<Eigen::Index> hidden_widths;  // deep GP only
  KernelParams fixed_params;                // dense gp-bae only
};

struct ModelSpec {
  ModelKind kind = ModelKind::SgpBae;
  Eigen::Index latent_dim = 2;
  Eigen::Index data_dim = 0;  // P, filled from the dataset
  Eigen::Index aux_dim = 0;   // D, filled from the dataset
  std::vector<Eigen::Index> decoder_hidden = {64};
  std::vector<Eigen::Index> encoder_hidden = {64};
  Activation activation = Activation::Tanh;
  double beta = 100.0;
  double weight_prior_var = 1.0;
  GpSettings gp;

  bool has_sparse_gp() const {
    return kind == ModelKind::SgpBae || kind == ModelKind::DeepSgpBae;
  }
  // input widths of each GP layer, ending in latent_dim
  std::vector<Eigen::Index> gp_layer_widths() const;
};

// ---- standalone operations ----

// Missing entries of y zero-filled by the caller; epsilon ~ N(0, I).
RowMat encode(const EncoderNet& enc, const Eigen::Ref<const RowMat>& y,
              const Eigen::Ref<const RowMat>& epsilon);

// Sum over observed entries of log N(y; decode(z), 1/beta).
double decoder_log_likelihood(const DecoderNet& dec,
                              const Eigen::Ref<const RowMat>& z,
                              const Eigen::Ref<const RowMat>& y,
                              const Eigen::Ref<const RowMat>& mask);

// Eq-style mini-batch energies (values; gradients run through the graph
// assembler below). n_total is N, the dataset size behind the batch.
double energy_bae(const Batch& batch, const DecoderNet& dec,
                  Eigen::Index n_total);

struct EnergyBreakdown {
  double psi_prior = 0.0;     // decoder + hyper + inducing priors
  double latent_prior = 0.0;  // scaled latent term
  double likelihood = 0.0;    // scaled observation term
  double total() const { return -(psi_prior + latent_prior + likelihood); }
};

// Sparse-GP energy with per-group inducing blocks; batch rows must be
// sorted by group. Exposed as a breakdown for the reduction checks.
EnergyBreakdown energy_sgpbae_terms(const Batch& batch, const DecoderNet& dec,
                                    const std::vector<GpLayerState>& gp_layers,
                                    const ModelSpec& spec,
                                    const UniformBox& box,
                                    Eigen::Index n_total, Eigen::Index n_groups,
                                    Rng* rng = nullptr);

double energy_sgpbae(const Batch& batch, const DecoderNet& dec,
                     const GpLayerState& gp, const ModelSpec& spec,
                     const UniformBox& box, Eigen::Index n_total);

// Energy with gradients for every sampled parameter group.
struct EnergyGradients {
  double value = 0.0;
  Eigen::VectorXd decoder;  // flattened like Mlp::flatten
  struct GpLayer {
    Eigen::VectorXd log_lengthscales;
    double log_variance = 0.0;
    RowMat s;
    std::vector<RowMat> u;
  };
  std::vector<GpLayer> gp;
  RowMat latent;
};

EnergyGradients energy_sgpbae_gradients(
    const Batch& batch, const DecoderNet& dec,
    const std::vector<GpLayerState>& gp_layers, const ModelSpec& spec,
    const UniformBox& box, Eigen::Index n_total, Eigen::Index n_groups,
    Rng* rng = nullptr);

// Eq. 4: sum of squared distances between encoder outputs and labels.
double encoder_distill_loss(const EncoderNet& enc,
                            const Eigen::Ref<const RowMat>& y,
                            const Eigen::Ref<const RowMat>& epsilon,
                            const Eigen::Ref<const RowMat>& labels);

class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, Eigen::Index dim);
  void step(Eigen::Ref<Eigen::VectorXd> params,
            const Eigen::Ref<const Eigen::VectorXd>& grad);

 private:
  double lr_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

// ---- the training loop ----

struct TrainConfig {
  SghmcConfig sghmc;
  Eigen::Index batch_size = 0;  // 0 = full batch
  Eigen::Index k_steps = 50;    // SGHMC steps per outer iteration
  Eigen::Index j_steps = 30;    // encoder optimizer steps per iteration
  double adam_lr = 0.001;
  // Optional MAP warm start: this many Adam steps on the full energy
  // before the sampler takes over. Keeps desk-scale budgets realistic.
  Eigen::Index pretrain_steps = 0;
  double pretrain_lr = 0.003;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<PosteriorSample> samples;
  EncoderNet encoder;
  ModelSpec spec;          // with data dims filled in
  UniformBox inducing_box;
  bool aborted = false;
  std::string abort_reason;
  double final_energy = 0.0;
};

TrainResult train(const Dataset& data, ModelSpec spec, TrainConfig config,
                  const std::function<void(std::int64_t)>& on_sample = {});

// ---- posterior consumers ----

struct Generated {
  RowMat mean;      // b x P
  RowMat variance;  // b x P, across-sample (epistemic) only
};

// Conditional generation at new auxiliary inputs for the sparse-GP kinds.
Generated generate(const std::vector<PosteriorSample>& samples,
                   const ModelSpec& spec, const UniformBox& box,
                   const Eigen::Ref<const RowMat>& x_star, int group, Rng& rng);

struct Imputation {
  RowMat mean;    // N x P predictive mean
  RowMat stddev;  // N x P predictive standard deviation
};

// Encode the zero-filled observations per posterior sample, decode, and
// aggregate; predictive variance adds the observation noise 1/beta.
Imputation impute(const std::vector<PosteriorSample>& samples,
                  const ModelSpec& spec, const EncoderNet& encoder,
                  const Dataset& data, Rng& rng);

// Rebuild per-sample priors (used by generation, diagnostics, tests).
SparseGPPrior prior_from_sample(const PosteriorSample& sample,
                                const ModelSpec& spec, const UniformBox& box,
                                std::size_t layer, int group);
DecoderNet decoder_from_sample(const PosteriorSample& sample,
                               const ModelSpec& spec);

}  // namespace sgpbae
