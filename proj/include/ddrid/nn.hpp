#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddrid/common.hpp"
#include "ddrid/data.hpp"
#include "ddrid/tensor.hpp"

namespace ddrid::nn {

enum class LayerKind : uint8_t {
    Conv,
    Deconv,
    FullyConnected,
    BatchNorm,
    LeakyRelu,
    Relu,
    Tanh01,  // tanh rescaled to [0,1]: y = (tanh(x)+1)/2
    Sigmoid,
};

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind;
    int kernel = 0;
    int stride = 0;
    int padding = 0;
    int out_channels = 0;
    float negative_slope = 0.0f;

    static LayerSpec conv(int k, int s, int p, int out);
    static LayerSpec deconv(int k, int s, int p, int out);
    static LayerSpec fully_connected(int out);
    static LayerSpec batch_norm();
    static LayerSpec leaky_relu(float slope);
    static LayerSpec relu();
    static LayerSpec tanh01();
    static LayerSpec sigmoid();
};

struct Shape3 {
    int c = 0, h = 0, w = 0;
    int64_t numel() const { return int64_t(c) * h * w; }
    bool operator==(const Shape3&) const = default;
    std::string str() const;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    Shape3 input_shape;

    // Per-layer output shapes; throws ShapeError on an inconsistent chain.
    std::vector<Shape3> layer_output_shapes() const;
    Shape3 output_shape() const;
    uint64_t fingerprint() const;
};

enum class DatasetKind : uint8_t { mnist, cifar_like };

int latent_dim(DatasetKind kind);
int image_channels(DatasetKind kind);

struct StandardSpecs {
    NetworkSpec encoder;
    NetworkSpec decoder;
    NetworkSpec discriminator;
};

// Table-driven architectures: a DCGAN-style conv encoder to an FC latent,
// the transposed decoder, and the fully-connected latent discriminator.
StandardSpecs standard_specs(DatasetKind kind);

struct LayerParams {
    Tensor w, b;                  // conv/deconv/fc
    Tensor gamma, beta;           // batch-norm affine
    Tensor run_mean, run_var;     // batch-norm running statistics
};

struct NetworkParams {
    std::vector<LayerParams> layers;

    // Visits trainable tensors in a fixed order; is_bn_affine marks batch-norm
    // scale/shift (excluded from weight decay).
    template <typename F>
    void for_each_trainable(F&& f) {
        for (auto& lp : layers) {
            if (lp.w.numel() > 0) f(lp.w, false);
            if (lp.b.numel() > 0) f(lp.b, false);
            if (lp.gamma.numel() > 0) f(lp.gamma, true);
            if (lp.beta.numel() > 0) f(lp.beta, true);
        }
    }
    template <typename F>
    void for_each_trainable(F&& f) const {
        for (const auto& lp : layers) {
            if (lp.w.numel() > 0) f(lp.w, false);
            if (lp.b.numel() > 0) f(lp.b, false);
            if (lp.gamma.numel() > 0) f(lp.gamma, true);
            if (lp.beta.numel() > 0) f(lp.beta, true);
        }
    }

    int64_t trainable_count() const;
    bool all_finite() const;
};

inline constexpr float kWeightInitStd = 0.02f;
inline constexpr float kBnEps = 1e-5f;
inline constexpr float kBnMomentum = 0.1f;

NetworkParams init_params(const NetworkSpec& spec, uint64_t seed);
NetworkParams zeros_like(const NetworkSpec& spec);

enum class Mode : uint8_t { train, inference };

struct BnCache {
    Tensor xhat;
    std::vector<float> invstd;
};

struct ForwardContext {
    bool valid = false;
    Mode mode = Mode::inference;
    std::vector<Tensor> acts;  // acts[0] = input, acts[i+1] = layer i output
    std::vector<BnCache> bn;   // parallel to layers
};

// Activations are NHWC: image batches [B,H,W,C], latent batches [B,D].
// Train mode uses batch statistics in batch-norm layers and updates their
// running statistics (hence non-const params); inference mode leaves params
// untouched. Pass ctx to retain what backward needs.
Tensor forward(const NetworkSpec& spec, NetworkParams& params, const Tensor& input, Mode mode,
               ForwardContext* ctx = nullptr);
Tensor forward_inference(const NetworkSpec& spec, const NetworkParams& params,
                         const Tensor& input);

// Accumulates parameter gradients into grads (+=) and returns the gradient
// with respect to the context's input. Requires a train-mode context.
Tensor backward(const NetworkSpec& spec, const NetworkParams& params, const ForwardContext& ctx,
                const Tensor& grad_output, NetworkParams& grads);

// Packs channel-major data images into an NHWC batch tensor.
Tensor pack_batch(const data::ImageDataset& ds, const std::vector<int64_t>& indices);
Tensor pack_image(const data::Image& img);

}  // namespace ddrid::nn
