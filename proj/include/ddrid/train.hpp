#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ddrid/data.hpp"
#include "ddrid/nn.hpp"
#include "ddrid/rng.hpp"
#include "ddrid/tensor.hpp"

namespace ddrid::train {

struct TrainConfig {
    int batch_size = 256;
    double weight_decay = 1e-6;
    int pretrain_epochs = 150;
    int finetune_epochs = 100;
    double lr_initial = 1e-4;
    double lr_after = 1e-5;
    int lr_switch_epoch = 50;
    double sigma = 0.1;
    uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;  // throws ConfigError naming the offending field
    double lr_for_epoch(int epoch) const {
        return epoch < lr_switch_epoch ? lr_initial : lr_after;
    }
};

struct Centroid {
    Tensor z_c;                // [d]
    Tensor decoded_template;   // [32,32,C]; empty until finetuning completes
    bool has_template() const { return decoded_template.numel() > 0; }
};

struct EpochLoss {
    int epoch = 0;
    std::string stage;  // "pretrain" | "finetune"
    double l_oc = 0.0;
    double l_lsc_disc = 0.0;
    double l_lsc_enc = 0.0;
    double l_r = 0.0;
    double learning_rate = 0.0;
};

// Adam over one parameter group (a list of tensors visited in fixed order).
struct AdamState {
    std::vector<Tensor> m, v;
    uint64_t step = 0;
};

struct ParamGroup {
    std::vector<Tensor*> tensors;
    std::vector<uint8_t> is_bn_affine;

    void add(nn::NetworkParams& p);
    static ParamGroup of(nn::NetworkParams& p);
    static ParamGroup of(nn::NetworkParams& a, nn::NetworkParams& b);
};

AdamState make_adam_state(const ParamGroup& group);

// Standard Adam with bias correction; decoupled lr*wd*p decay applied to all
// tensors except batch-norm scale/shift.
void adam_update(const ParamGroup& params, const ParamGroup& grads, AdamState& state,
                 double lr, double weight_decay, const TrainConfig& cfg);

struct TrainedModel {
    nn::DatasetKind kind = nn::DatasetKind::mnist;
    nn::StandardSpecs specs;
    nn::NetworkParams encoder_c, decoder_c;
    nn::NetworkParams encoder_n, decoder_n;
    nn::NetworkParams discriminator;
    Centroid centroid;
    TrainConfig config;
    std::vector<EpochLoss> loss_history;
    std::vector<std::string> warnings;
    int selected_score_kind = -1;  // validation-selected score kind, set post-training
    AdamState opt_rc, opt_rn, opt_dl;
};

// Both reconstruction networks pretrained as plain autoencoders on the mean
// squared reconstruction error, two-phase learning-rate schedule.
struct PretrainResult {
    nn::NetworkParams encoder_c, decoder_c, encoder_n, decoder_n;
    std::vector<EpochLoss> history;
    AdamState opt_rc, opt_rn;
};
PretrainResult pretrain(const data::ImageDataset& train_subset, const TrainConfig& cfg,
                        nn::DatasetKind kind);
PretrainResult pretrain_with_specs(const data::ImageDataset& train_subset,
                                   const TrainConfig& cfg, const nn::StandardSpecs& specs);

// Mean of all training-subset latent encodings (inference mode, double
// accumulation). decoded_template left unset.
Centroid compute_centroid(const nn::NetworkSpec& enc_spec, const nn::NetworkParams& encoder_c,
                          const data::ImageDataset& train_subset, int batch_size = 256);

// Loss values over a batch (pure, inference mode). The training loop computes
// its own values from its train-mode passes; these are the public evaluators.
double one_class_loss(const nn::NetworkSpec& enc_spec, const nn::NetworkParams& encoder_c,
                      const Tensor& batch, const Tensor& z_c);
double reconstruction_loss(const nn::StandardSpecs& specs, const nn::NetworkParams& encoder_c,
                           const nn::NetworkParams& decoder_c, const nn::NetworkParams& encoder_n,
                           const nn::NetworkParams& decoder_n, const Tensor& batch);
// (discriminator_objective to be ascended, encoder_objective to be descended)
std::pair<double, double> lsc_loss_components(const nn::NetworkSpec& disc_spec,
                                              const nn::NetworkParams& discriminator,
                                              const nn::NetworkSpec& enc_spec,
                                              const nn::NetworkParams& encoder_c,
                                              const Tensor& real_latents, const Tensor& batch);

inline constexpr double kProbFloor = 1e-7;  // D_L outputs clamped to [floor, 1-floor]

// One finetuning minibatch, drivable sub-step by sub-step in update order:
// prepare -> discriminator ascent (b) -> R_C descent (c) -> R_N descent (d).
// finetune() drives it; tests drive the steps individually.
class FinetuneDriver {
public:
    FinetuneDriver(TrainedModel& model, const TrainConfig& cfg);

    // Samples m latents from N(z_c, sigma^2 I) and runs the train-mode
    // forward passes shared by the three updates.
    void prepare(const Tensor& batch, Rng& latent_rng);

    void step_discriminator(double lr);  // (b)
    void step_rc(double lr);             // (c)
    void step_rn(double lr);             // (d)

    struct Losses {
        double l_oc = 0.0, lsc_disc = 0.0, lsc_enc = 0.0, l_r = 0.0;
    };
    const Losses& losses() const { return losses_; }

private:
    TrainedModel& model_;
    const TrainConfig& cfg_;
    int64_t m_ = 0;
    Tensor batch_, real_latents_, latents_, recon_sum_;
    nn::ForwardContext ctx_enc_c_, ctx_dec_c_, ctx_enc_n_, ctx_dec_n_;
    Losses losses_;
    bool prepared_ = false;
};

// Joint finetuning: updates model in place, appends loss history, and
// caches decoded_template = D_C(z_c) after the final epoch. z_c is frozen.
void finetune(TrainedModel& model, const data::ImageDataset& train_subset,
              const TrainConfig& cfg);

// pretrain -> centroid -> finetune.
TrainedModel train_model(const data::ImageDataset& train_subset, nn::DatasetKind kind,
                         const TrainConfig& cfg);
TrainedModel train_model_with_specs(const data::ImageDataset& train_subset,
                                    nn::DatasetKind kind, const nn::StandardSpecs& specs,
                                    const TrainConfig& cfg);

// Comma-separated per-epoch loss log:
// epoch,stage,L_OC,L_LSC_disc,L_LSC_enc,L_R,learning_rate
void write_loss_log(const std::vector<EpochLoss>& history, const std::filesystem::path& path);

// Minibatch index order for one stage: seeded shuffle per epoch, fixed batch
// partitioning, trailing batch dropped if smaller than 2.
std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& order_rng);

}  // namespace ddrid::train
