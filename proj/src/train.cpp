#include "ddrid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ddrid/kernels.hpp"

namespace ddrid::train {
namespace {

using kern::Kernels;
using nn::ForwardContext;
using nn::Mode;
using nn::NetworkParams;
using nn::NetworkSpec;

// Seed-stream tags derived from TrainConfig::seed.
enum : uint64_t {
    kSeedInitEncC = 1,
    kSeedInitDecC = 2,
    kSeedInitEncN = 3,
    kSeedInitDecN = 4,
    kSeedInitDisc = 5,
    kSeedPretrainOrder = 6,
    kSeedFinetuneOrder = 7,
    kSeedLatents = 8,
};

uint64_t derive_seed(uint64_t base, uint64_t tag) {
    uint64_t s = base ^ (0x9E3779B97F4A7C15ULL * (tag + 1));
    return splitmix64(s);
}

void check_finite_loss(double v, const char* name, int epoch, int batch) {
    if (!std::isfinite(v))
        throw NumericError(std::string(name) + " is non-finite at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch));
}

double clamp_prob(double p) {
    return std::min(1.0 - kProbFloor, std::max(kProbFloor, p));
}

// dL/dp for mean log(1-p) terms, honoring the clamp (zero gradient when the
// raw output sits outside the clamp range).
float grad_log_one_minus(float p, int64_t m) {
    if (p <= kProbFloor || p >= 1.0 - kProbFloor) return 0.0f;
    return static_cast<float>(-1.0 / (double(m) * (1.0 - double(p))));
}

float grad_log(float p, int64_t m) {
    if (p <= kProbFloor || p >= 1.0 - kProbFloor) return 0.0f;
    return static_cast<float>(1.0 / (double(m) * double(p)));
}

double mean_log(const Tensor& p) {
    double s = 0.0;
    for (float v : p.v) s += std::log(clamp_prob(v));
    return s / double(p.numel());
}

double mean_log_one_minus(const Tensor& p) {
    double s = 0.0;
    for (float v : p.v) s += std::log(1.0 - clamp_prob(v));
    return s / double(p.numel());
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (pretrain_epochs < 1) throw ConfigError("pretrain_epochs must be >= 1");
    if (finetune_epochs < 1) throw ConfigError("finetune_epochs must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
    if (!(lr_initial > 0.0)) throw ConfigError("lr_initial must be > 0");
    if (!(lr_after > 0.0 && lr_after <= lr_initial))
        throw ConfigError("lr_after must satisfy 0 < lr_after <= lr_initial");
    if (lr_switch_epoch < 0) throw ConfigError("lr_switch_epoch must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in (0,1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in (0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

void ParamGroup::add(NetworkParams& p) {
    p.for_each_trainable([&](Tensor& t, bool is_bn) {
        tensors.push_back(&t);
        is_bn_affine.push_back(is_bn ? 1 : 0);
    });
}

ParamGroup ParamGroup::of(NetworkParams& p) {
    ParamGroup g;
    g.add(p);
    return g;
}

ParamGroup ParamGroup::of(NetworkParams& a, NetworkParams& b) {
    ParamGroup g;
    g.add(a);
    g.add(b);
    return g;
}

AdamState make_adam_state(const ParamGroup& group) {
    AdamState st;
    for (const Tensor* t : group.tensors) {
        st.m.emplace_back(t->shape);
        st.v.emplace_back(t->shape);
    }
    return st;
}

void adam_update(const ParamGroup& params, const ParamGroup& grads, AdamState& state,
                 double lr, double weight_decay, const TrainConfig& cfg) {
    if (params.tensors.size() != grads.tensors.size() ||
        params.tensors.size() != state.m.size())
        throw ShapeError("adam: group sizes disagree");
    state.step += 1;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(b1, double(state.step))));
    const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(b2, double(state.step))));
    const Kernels& K = kern::active();
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        Tensor& p = *params.tensors[i];
        const Tensor& g = *grads.tensors[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i]))
            throw ShapeError("adam: tensor shapes disagree");
        const float wd = params.is_bn_affine[i] ? 0.0f : static_cast<float>(weight_decay);
        K.adam_step(p.data(), g.data(), state.m[i].data(), state.v[i].data(), p.numel(),
                    static_cast<float>(lr), static_cast<float>(b1), static_cast<float>(b2),
                    static_cast<float>(cfg.adam_eps), c1, c2, wd);
    }
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& order_rng) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    order_rng.shuffle(idx);
    std::vector<std::vector<int64_t>> batches;
    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t take = std::min<int64_t>(batch_size, n - at);
        if (take < 2) break;  // batch statistics need at least two samples
        batches.emplace_back(idx.begin() + at, idx.begin() + at + take);
    }
    if (batches.empty())
        throw ArgumentError("training subset too small for any batch of >= 2 images");
    return batches;
}

PretrainResult pretrain(const data::ImageDataset& train_subset, const TrainConfig& cfg,
                        nn::DatasetKind kind) {
    return pretrain_with_specs(train_subset, cfg, nn::standard_specs(kind));
}

PretrainResult pretrain_with_specs(const data::ImageDataset& train_subset,
                                   const TrainConfig& cfg, const nn::StandardSpecs& specs) {
    cfg.validate();
    if (train_subset.images.empty()) throw ArgumentError("pretrain on empty training subset");

    PretrainResult r;
    r.encoder_c = nn::init_params(specs.encoder, derive_seed(cfg.seed, kSeedInitEncC));
    r.decoder_c = nn::init_params(specs.decoder, derive_seed(cfg.seed, kSeedInitDecC));
    r.encoder_n = nn::init_params(specs.encoder, derive_seed(cfg.seed, kSeedInitEncN));
    r.decoder_n = nn::init_params(specs.decoder, derive_seed(cfg.seed, kSeedInitDecN));

    auto group_c = ParamGroup::of(r.encoder_c, r.decoder_c);
    auto group_n = ParamGroup::of(r.encoder_n, r.decoder_n);
    r.opt_rc = make_adam_state(group_c);
    r.opt_rn = make_adam_state(group_n);

    const Kernels& K = kern::active();
    Rng order_rng(derive_seed(cfg.seed, kSeedPretrainOrder));
    const int64_t n = static_cast<int64_t>(train_subset.size());

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const double lr = cfg.lr_for_epoch(epoch);
        const auto batches = epoch_batches(n, cfg.batch_size, order_rng);
        double epoch_mse = 0.0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const Tensor x = nn::pack_batch(train_subset, batches[bi]);
            const int64_t m = static_cast<int64_t>(batches[bi].size());

            auto step_net = [&](NetworkParams& enc, NetworkParams& dec, ParamGroup& group,
                                AdamState& opt) {
                ForwardContext ctx_e, ctx_d;
                Tensor z = nn::forward(specs.encoder, enc, x, Mode::train, &ctx_e);
                Tensor out = nn::forward(specs.decoder, dec, z, Mode::train, &ctx_d);
                const double mse = K.sqdist(out.data(), x.data(), out.numel()) / double(m);
                Tensor gout(out.shape);
                K.scaled_diff(static_cast<float>(2.0 / double(m)), out.data(), x.data(),
                              gout.data(), out.numel());
                NetworkParams genc = nn::zeros_like(specs.encoder);
                NetworkParams gdec = nn::zeros_like(specs.decoder);
                Tensor gz = nn::backward(specs.decoder, dec, ctx_d, gout, gdec);
                nn::backward(specs.encoder, enc, ctx_e, gz, genc);
                auto ggroup = ParamGroup::of(genc, gdec);
                adam_update(group, ggroup, opt, lr, cfg.weight_decay, cfg);
                return mse;
            };

            const double mse_c = step_net(r.encoder_c, r.decoder_c, group_c, r.opt_rc);
            const double mse_n = step_net(r.encoder_n, r.decoder_n, group_n, r.opt_rn);
            check_finite_loss(mse_c + mse_n, "pretrain reconstruction loss", epoch,
                              static_cast<int>(bi));
            epoch_mse += mse_c + mse_n;
        }
        EpochLoss rec;
        rec.epoch = epoch;
        rec.stage = "pretrain";
        rec.l_r = epoch_mse / double(batches.size());
        rec.learning_rate = lr;
        r.history.push_back(rec);
    }
    return r;
}

Centroid compute_centroid(const NetworkSpec& enc_spec, const NetworkParams& encoder_c,
                          const data::ImageDataset& train_subset, int batch_size) {
    if (train_subset.images.empty()) throw ArgumentError("compute_centroid on empty subset");
    const int64_t n = static_cast<int64_t>(train_subset.size());
    const int64_t d = enc_spec.output_shape().numel();
    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t take = std::min<int64_t>(batch_size, n - at);
        std::vector<int64_t> idx(static_cast<size_t>(take));
        std::iota(idx.begin(), idx.end(), at);
        const Tensor x = nn::pack_batch(train_subset, idx);
        const Tensor z = nn::forward_inference(enc_spec, encoder_c, x);
        for (int64_t i = 0; i < take; ++i)
            for (int64_t j = 0; j < d; ++j) acc[j] += z.v[i * d + j];
    }
    Centroid c;
    c.z_c = Tensor({d});
    for (int64_t j = 0; j < d; ++j) c.z_c.v[j] = static_cast<float>(acc[j] / double(n));
    return c;
}

double one_class_loss(const NetworkSpec& enc_spec, const NetworkParams& encoder_c,
                      const Tensor& batch, const Tensor& z_c) {
    if (batch.numel() == 0) throw ArgumentError("one_class_loss on empty batch");
    const Tensor z = nn::forward_inference(enc_spec, encoder_c, batch);
    const int64_t m = z.shape[0];
    const int64_t d = z.numel() / m;
    if (d != z_c.numel()) throw ShapeError("centroid length does not match latent dimension");
    double s = 0.0;
    const Kernels& K = kern::active();
    for (int64_t i = 0; i < m; ++i) s += K.sqdist(z.data() + i * d, z_c.data(), d);
    return s / double(m);
}

double reconstruction_loss(const nn::StandardSpecs& specs, const NetworkParams& encoder_c,
                           const NetworkParams& decoder_c, const NetworkParams& encoder_n,
                           const NetworkParams& decoder_n, const Tensor& batch) {
    if (batch.numel() == 0) throw ArgumentError("reconstruction_loss on empty batch");
    const Kernels& K = kern::active();
    Tensor rc = nn::forward_inference(specs.decoder, decoder_c,
                                      nn::forward_inference(specs.encoder, encoder_c, batch));
    const Tensor rn = nn::forward_inference(specs.decoder, decoder_n,
                                            nn::forward_inference(specs.encoder, encoder_n, batch));
    K.add(rn.data(), rc.data(), rc.numel());
    const int64_t m = batch.shape[0];
    return K.sqdist(rc.data(), batch.data(), rc.numel()) / double(m);
}

std::pair<double, double> lsc_loss_components(const NetworkSpec& disc_spec,
                                              const NetworkParams& discriminator,
                                              const NetworkSpec& enc_spec,
                                              const NetworkParams& encoder_c,
                                              const Tensor& real_latents, const Tensor& batch) {
    if (real_latents.shape[0] != batch.shape[0])
        throw ArgumentError("real latent count must equal batch size");
    const Tensor z_fake = nn::forward_inference(enc_spec, encoder_c, batch);
    const Tensor p_real = nn::forward_inference(disc_spec, discriminator, real_latents);
    const Tensor p_fake = nn::forward_inference(disc_spec, discriminator, z_fake);
    const double enc_obj = mean_log_one_minus(p_fake);
    return {mean_log(p_real) + enc_obj, enc_obj};
}

FinetuneDriver::FinetuneDriver(TrainedModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg) {
    if (model_.centroid.z_c.numel() == 0)
        throw StateError("finetune requires a computed centroid");
}

void FinetuneDriver::prepare(const Tensor& batch, Rng& latent_rng) {
    const Kernels& K = kern::active();
    batch_ = batch;
    m_ = batch.shape[0];
    const int64_t d = model_.centroid.z_c.numel();

    // (a) sample m latents from N(z_c, sigma^2 I)
    real_latents_ = Tensor({m_, d});
    for (int64_t i = 0; i < m_; ++i)
        for (int64_t j = 0; j < d; ++j)
            real_latents_.v[i * d + j] =
                model_.centroid.z_c.v[j] +
                static_cast<float>(cfg_.sigma * latent_rng.next_gaussian());

    // shared train-mode forward passes; both network updates differentiate
    // the same pre-update reconstructions, as in the written procedure
    latents_ = nn::forward(model_.specs.encoder, model_.encoder_c, batch_, Mode::train,
                           &ctx_enc_c_);
    Tensor out_c = nn::forward(model_.specs.decoder, model_.decoder_c, latents_, Mode::train,
                               &ctx_dec_c_);
    Tensor z_n = nn::forward(model_.specs.encoder, model_.encoder_n, batch_, Mode::train,
                             &ctx_enc_n_);
    Tensor out_n = nn::forward(model_.specs.decoder, model_.decoder_n, z_n, Mode::train,
                               &ctx_dec_n_);
    recon_sum_ = std::move(out_c);
    K.add(out_n.data(), recon_sum_.data(), recon_sum_.numel());

    losses_ = Losses{};
    losses_.l_r = K.sqdist(recon_sum_.data(), batch_.data(), recon_sum_.numel()) / double(m_);
    double oc = 0.0;
    for (int64_t i = 0; i < m_; ++i)
        oc += K.sqdist(latents_.data() + i * d, model_.centroid.z_c.data(), d);
    losses_.l_oc = oc / double(m_);
    prepared_ = true;
}

void FinetuneDriver::step_discriminator(double lr) {
    if (!prepared_) throw StateError("finetune step before prepare");
    ForwardContext ctx_real, ctx_fake;
    const Tensor p_real = nn::forward(model_.specs.discriminator, model_.discriminator,
                                      real_latents_, Mode::train, &ctx_real);
    const Tensor p_fake = nn::forward(model_.specs.discriminator, model_.discriminator,
                                      latents_, Mode::train, &ctx_fake);
    losses_.lsc_disc = mean_log(p_real) + mean_log_one_minus(p_fake);

    // ascend: descend the negated objective
    Tensor d_real(p_real.shape), d_fake(p_fake.shape);
    for (int64_t i = 0; i < m_; ++i) {
        d_real.v[i] = -grad_log(p_real.v[i], m_);
        d_fake.v[i] = -grad_log_one_minus(p_fake.v[i], m_);
    }
    NetworkParams gdisc = nn::zeros_like(model_.specs.discriminator);
    nn::backward(model_.specs.discriminator, model_.discriminator, ctx_real, d_real, gdisc);
    nn::backward(model_.specs.discriminator, model_.discriminator, ctx_fake, d_fake, gdisc);
    auto group = ParamGroup::of(model_.discriminator);
    auto ggroup = ParamGroup::of(gdisc);
    adam_update(group, ggroup, model_.opt_dl, lr, cfg_.weight_decay, cfg_);
}

void FinetuneDriver::step_rc(double lr) {
    if (!prepared_) throw StateError("finetune step before prepare");
    const Kernels& K = kern::active();
    const int64_t d = model_.centroid.z_c.numel();

    // adversarial term through the (just-updated) discriminator
    ForwardContext ctx_d;
    const Tensor p = nn::forward(model_.specs.discriminator, model_.discriminator, latents_,
                                 Mode::train, &ctx_d);
    losses_.lsc_enc = mean_log_one_minus(p);
    Tensor dp(p.shape);
    for (int64_t i = 0; i < m_; ++i) dp.v[i] = grad_log_one_minus(p.v[i], m_);
    NetworkParams disc_scratch = nn::zeros_like(model_.specs.discriminator);
    Tensor g_latent = nn::backward(model_.specs.discriminator, model_.discriminator, ctx_d, dp,
                                   disc_scratch);  // scratch grads discarded

    // L_R through the class-specific decoder
    Tensor g_out(recon_sum_.shape);
    K.scaled_diff(static_cast<float>(2.0 / double(m_)), recon_sum_.data(), batch_.data(),
                  g_out.data(), g_out.numel());
    NetworkParams genc = nn::zeros_like(model_.specs.encoder);
    NetworkParams gdec = nn::zeros_like(model_.specs.decoder);
    Tensor gz = nn::backward(model_.specs.decoder, model_.decoder_c, ctx_dec_c_, g_out, gdec);

    // L_OC latent term plus the adversarial latent gradient
    const float s = static_cast<float>(2.0 / double(m_));
    for (int64_t i = 0; i < m_; ++i)
        for (int64_t j = 0; j < d; ++j)
            gz.v[i * d + j] += s * (latents_.v[i * d + j] - model_.centroid.z_c.v[j]) +
                               g_latent.v[i * d + j];

    nn::backward(model_.specs.encoder, model_.encoder_c, ctx_enc_c_, gz, genc);
    auto group = ParamGroup::of(model_.encoder_c, model_.decoder_c);
    auto ggroup = ParamGroup::of(genc, gdec);
    adam_update(group, ggroup, model_.opt_rc, lr, cfg_.weight_decay, cfg_);
}

void FinetuneDriver::step_rn(double lr) {
    if (!prepared_) throw StateError("finetune step before prepare");
    const Kernels& K = kern::active();
    Tensor g_out(recon_sum_.shape);
    K.scaled_diff(static_cast<float>(2.0 / double(m_)), recon_sum_.data(), batch_.data(),
                  g_out.data(), g_out.numel());
    NetworkParams genc = nn::zeros_like(model_.specs.encoder);
    NetworkParams gdec = nn::zeros_like(model_.specs.decoder);
    Tensor gz = nn::backward(model_.specs.decoder, model_.decoder_n, ctx_dec_n_, g_out, gdec);
    nn::backward(model_.specs.encoder, model_.encoder_n, ctx_enc_n_, gz, genc);
    auto group = ParamGroup::of(model_.encoder_n, model_.decoder_n);
    auto ggroup = ParamGroup::of(genc, gdec);
    adam_update(group, ggroup, model_.opt_rn, lr, cfg_.weight_decay, cfg_);
    prepared_ = false;
}

void finetune(TrainedModel& model, const data::ImageDataset& train_subset,
              const TrainConfig& cfg) {
    cfg.validate();
    if (train_subset.images.empty()) throw ArgumentError("finetune on empty training subset");
    if (!model.centroid.z_c.numel()) throw StateError("finetune requires a centroid");

    auto group_dl = ParamGroup::of(model.discriminator);
    if (model.opt_dl.m.empty()) model.opt_dl = make_adam_state(group_dl);

    Rng order_rng(derive_seed(cfg.seed, kSeedFinetuneOrder));
    Rng latent_rng(derive_seed(cfg.seed, kSeedLatents));
    const int64_t n = static_cast<int64_t>(train_subset.size());
    FinetuneDriver driver(model, cfg);

    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        const double lr = cfg.lr_for_epoch(epoch);
        const auto batches = epoch_batches(n, cfg.batch_size, order_rng);
        EpochLoss rec;
        rec.epoch = epoch;
        rec.stage = "finetune";
        rec.learning_rate = lr;
        double disc_min = 0.0, disc_max = 0.0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const Tensor x = nn::pack_batch(train_subset, batches[bi]);
            driver.prepare(x, latent_rng);
            driver.step_discriminator(lr);
            driver.step_rc(lr);
            driver.step_rn(lr);
            const auto& L = driver.losses();
            check_finite_loss(L.l_oc, "L_OC", epoch, static_cast<int>(bi));
            check_finite_loss(L.lsc_disc, "L_LSC (discriminator)", epoch, static_cast<int>(bi));
            check_finite_loss(L.lsc_enc, "L_LSC (encoder)", epoch, static_cast<int>(bi));
            check_finite_loss(L.l_r, "L_R", epoch, static_cast<int>(bi));
            rec.l_oc += L.l_oc;
            rec.l_lsc_disc += L.lsc_disc;
            rec.l_lsc_enc += L.lsc_enc;
            rec.l_r += L.l_r;
            if (bi == 0) {
                disc_min = disc_max = L.lsc_disc;
            } else {
                disc_min = std::min(disc_min, L.lsc_disc);
                disc_max = std::max(disc_max, L.lsc_disc);
            }
        }
        const double nb = double(batches.size());
        rec.l_oc /= nb;
        rec.l_lsc_disc /= nb;
        rec.l_lsc_enc /= nb;
        rec.l_r /= nb;
        model.loss_history.push_back(rec);
        if (batches.size() >= 2 && disc_max - disc_min <= 1e-12)
            model.warnings.push_back("discriminator saturation in finetune epoch " +
                                     std::to_string(epoch));
    }

    // cache the reconstruction-space template D_C(z_c), inference mode
    Tensor z({1, model.centroid.z_c.numel()});
    z.v = model.centroid.z_c.v;
    Tensor tmpl = nn::forward_inference(model.specs.decoder, model.decoder_c, z);
    const auto os = model.specs.decoder.output_shape();
    tmpl.reshape({os.h, os.w, os.c});
    model.centroid.decoded_template = std::move(tmpl);
}

TrainedModel train_model(const data::ImageDataset& train_subset, nn::DatasetKind kind,
                         const TrainConfig& cfg) {
    return train_model_with_specs(train_subset, kind, nn::standard_specs(kind), cfg);
}

TrainedModel train_model_with_specs(const data::ImageDataset& train_subset,
                                    nn::DatasetKind kind, const nn::StandardSpecs& specs,
                                    const TrainConfig& cfg) {
    cfg.validate();
    TrainedModel model;
    model.kind = kind;
    model.specs = specs;
    model.config = cfg;

    auto pre = pretrain_with_specs(train_subset, cfg, specs);
    model.encoder_c = std::move(pre.encoder_c);
    model.decoder_c = std::move(pre.decoder_c);
    model.encoder_n = std::move(pre.encoder_n);
    model.decoder_n = std::move(pre.decoder_n);
    model.loss_history = std::move(pre.history);

    model.centroid = compute_centroid(model.specs.encoder, model.encoder_c, train_subset,
                                      cfg.batch_size);

    model.discriminator =
        nn::init_params(model.specs.discriminator, derive_seed(cfg.seed, kSeedInitDisc));
    // fresh optimizer states for the finetuning stage
    auto group_rc = ParamGroup::of(model.encoder_c, model.decoder_c);
    auto group_rn = ParamGroup::of(model.encoder_n, model.decoder_n);
    auto group_dl = ParamGroup::of(model.discriminator);
    model.opt_rc = make_adam_state(group_rc);
    model.opt_rn = make_adam_state(group_rn);
    model.opt_dl = make_adam_state(group_dl);

    finetune(model, train_subset, cfg);
    for (const auto* p : {&model.encoder_c, &model.decoder_c, &model.encoder_n,
                          &model.decoder_n, &model.discriminator})
        if (!p->all_finite()) throw NumericError("trained parameters contain non-finite values");
    return model;
}

void write_loss_log(const std::vector<EpochLoss>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,stage,L_OC,L_LSC_disc,L_LSC_enc,L_R,learning_rate\n";
    char buf[256];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", e.epoch,
                      e.stage.c_str(), e.l_oc, e.l_lsc_disc, e.l_lsc_enc, e.l_r,
                      e.learning_rate);
        out << buf;
    }
    if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace ddrid::train
