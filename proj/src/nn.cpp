#include "ddrid/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ddrid/kernels.hpp"
#include "ddrid/rng.hpp"
#include "ddrid/sha256.hpp"
#include "ddrid/threadpool.hpp"

namespace ddrid::nn {
namespace {

using kern::Kernels;

struct LayerIo {
    Shape3 in;
    Shape3 out;
};

std::vector<LayerIo> layer_io(const NetworkSpec& spec) {
    std::vector<LayerIo> io;
    io.reserve(spec.layers.size());
    Shape3 cur = spec.input_shape;
    if (cur.numel() <= 0) throw ShapeError("network input shape is empty");
    for (const auto& l : spec.layers) {
        Shape3 out = cur;
        switch (l.kind) {
            case LayerKind::Conv: {
                if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1)
                    throw ShapeError("bad conv hyperparameters");
                const int eh = cur.h + 2 * l.padding - l.kernel;
                const int ew = cur.w + 2 * l.padding - l.kernel;
                if (eh < 0 || ew < 0) throw ShapeError("conv kernel larger than padded input");
                out = Shape3{l.out_channels, eh / l.stride + 1, ew / l.stride + 1};
                break;
            }
            case LayerKind::Deconv: {
                if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1)
                    throw ShapeError("bad deconv hyperparameters");
                const int oh = (cur.h - 1) * l.stride - 2 * l.padding + l.kernel;
                const int ow = (cur.w - 1) * l.stride - 2 * l.padding + l.kernel;
                if (oh < 1 || ow < 1) throw ShapeError("deconv output shape collapses");
                out = Shape3{l.out_channels, oh, ow};
                break;
            }
            case LayerKind::FullyConnected:
                if (l.out_channels < 1) throw ShapeError("bad fc width");
                out = Shape3{l.out_channels, 1, 1};
                break;
            case LayerKind::BatchNorm:
            case LayerKind::LeakyRelu:
            case LayerKind::Relu:
            case LayerKind::Tanh01:
            case LayerKind::Sigmoid:
                break;
        }
        io.push_back({cur, out});
        cur = out;
    }
    return io;
}

Tensor make_activation(int64_t batch, const Shape3& s) {
    if (s.h == 1 && s.w == 1) return Tensor({batch, s.c});
    return Tensor({batch, s.h, s.w, s.c});
}

// col rows are grid positions (b,gy,gx); col columns are (ky,kx,c).
// Element: img[b, gy*s-p+ky, gx*s-p+kx, c], zero outside the image.
void im2col(const float* img, int64_t batch, int H, int W, int C, int k, int s, int p,
            int Gh, int Gw, float* col) {
    const int64_t K = int64_t(k) * k * C;
    const int64_t rows_per_b = int64_t(Gh) * Gw;
    parallel_for(batch, [&](int64_t b) {
        const float* im = img + b * int64_t(H) * W * C;
        float* crow = col + b * rows_per_b * K;
        for (int gy = 0; gy < Gh; ++gy) {
            for (int gx = 0; gx < Gw; ++gx, crow += K) {
                const int iy0 = gy * s - p;
                const int ix0 = gx * s - p;
                for (int ky = 0; ky < k; ++ky) {
                    float* dst = crow + int64_t(ky) * k * C;
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst, 0, sizeof(float) * size_t(k) * C);
                        continue;
                    }
                    const int kx_lo = std::clamp(-ix0, 0, k);
                    const int kx_hi = std::clamp(W - ix0, kx_lo, k);
                    if (kx_lo > 0) std::memset(dst, 0, sizeof(float) * size_t(kx_lo) * C);
                    if (kx_hi > kx_lo)
                        std::memcpy(dst + int64_t(kx_lo) * C,
                                    im + (int64_t(iy) * W + (ix0 + kx_lo)) * C,
                                    sizeof(float) * size_t(kx_hi - kx_lo) * C);
                    if (kx_hi < k)
                        std::memset(dst + int64_t(kx_hi) * C, 0,
                                    sizeof(float) * size_t(k - kx_hi) * C);
                }
            }
        }
    });
}

// Scatter-add inverse of im2col; img must be zeroed by the caller. Rows are
// processed in a fixed order per image, so results are worker-count
// independent (images are disjoint jobs).
void col2im_add(const float* col, int64_t batch, int H, int W, int C, int k, int s, int p,
                int Gh, int Gw, float* img) {
    const int64_t K = int64_t(k) * k * C;
    const int64_t rows_per_b = int64_t(Gh) * Gw;
    parallel_for(batch, [&](int64_t b) {
        float* im = img + b * int64_t(H) * W * C;
        const float* crow = col + b * rows_per_b * K;
        for (int gy = 0; gy < Gh; ++gy) {
            for (int gx = 0; gx < Gw; ++gx, crow += K) {
                const int iy0 = gy * s - p;
                const int ix0 = gx * s - p;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= H) continue;
                    const int kx_lo = std::clamp(-ix0, 0, k);
                    const int kx_hi = std::clamp(W - ix0, kx_lo, k);
                    if (kx_hi <= kx_lo) continue;
                    const float* src = crow + (int64_t(ky) * k + kx_lo) * C;
                    float* dst = im + (int64_t(iy) * W + (ix0 + kx_lo)) * C;
                    const int64_t n = int64_t(kx_hi - kx_lo) * C;
                    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
                }
            }
        }
    });
}

thread_local std::vector<float> g_col_scratch;

float* col_scratch(int64_t n) {
    if (g_col_scratch.size() < size_t(n)) g_col_scratch.resize(size_t(n));
    return g_col_scratch.data();
}

void check_finite(const Tensor& t, const char* what) {
    for (float v : t.v)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Deconv: return "deconv";
        case LayerKind::FullyConnected: return "fc";
        case LayerKind::BatchNorm: return "bn";
        case LayerKind::LeakyRelu: return "leaky_relu";
        case LayerKind::Relu: return "relu";
        case LayerKind::Tanh01: return "tanh01";
        case LayerKind::Sigmoid: return "sigmoid";
    }
    return "?";
}

LayerSpec LayerSpec::conv(int k, int s, int p, int out) {
    return LayerSpec{LayerKind::Conv, k, s, p, out, 0.0f};
}
LayerSpec LayerSpec::deconv(int k, int s, int p, int out) {
    return LayerSpec{LayerKind::Deconv, k, s, p, out, 0.0f};
}
LayerSpec LayerSpec::fully_connected(int out) {
    return LayerSpec{LayerKind::FullyConnected, 0, 0, 0, out, 0.0f};
}
LayerSpec LayerSpec::batch_norm() { return LayerSpec{LayerKind::BatchNorm, 0, 0, 0, 0, 0.0f}; }
LayerSpec LayerSpec::leaky_relu(float slope) {
    return LayerSpec{LayerKind::LeakyRelu, 0, 0, 0, 0, slope};
}
LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::Relu, 0, 0, 0, 0, 0.0f}; }
LayerSpec LayerSpec::tanh01() { return LayerSpec{LayerKind::Tanh01, 0, 0, 0, 0, 0.0f}; }
LayerSpec LayerSpec::sigmoid() { return LayerSpec{LayerKind::Sigmoid, 0, 0, 0, 0, 0.0f}; }

std::string Shape3::str() const {
    std::ostringstream os;
    os << c << "x" << h << "x" << w;
    return os.str();
}

std::vector<Shape3> NetworkSpec::layer_output_shapes() const {
    std::vector<Shape3> shapes;
    for (const auto& io : layer_io(*this)) shapes.push_back(io.out);
    return shapes;
}

Shape3 NetworkSpec::output_shape() const {
    auto shapes = layer_output_shapes();
    return shapes.empty() ? input_shape : shapes.back();
}

uint64_t NetworkSpec::fingerprint() const {
    std::ostringstream os;
    os << "in:" << input_shape.str();
    for (const auto& l : layers) {
        os << "|" << layer_kind_name(l.kind) << ":" << l.kernel << "," << l.stride << ","
           << l.padding << "," << l.out_channels << "," << l.negative_slope;
    }
    const std::string s = os.str();
    return sha256_prefix64(s.data(), s.size());
}

int latent_dim(DatasetKind kind) { return kind == DatasetKind::mnist ? 128 : 512; }
int image_channels(DatasetKind kind) { return kind == DatasetKind::mnist ? 1 : 3; }

StandardSpecs standard_specs(DatasetKind kind) {
    const int d = latent_dim(kind);
    const int c_img = image_channels(kind);
    const int disc_h = kind == DatasetKind::mnist ? 64 : 128;

    StandardSpecs s;
    s.encoder.input_shape = {c_img, 32, 32};
    s.encoder.layers = {
        LayerSpec::conv(4, 2, 1, 64),  LayerSpec::leaky_relu(0.2f),
        LayerSpec::conv(4, 2, 1, 128), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::conv(4, 2, 1, 256), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::conv(4, 2, 1, 512), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::fully_connected(d),
    };

    // Latent enters as a d x 1 x 1 map; first deconv (stride 1, no padding)
    // expands it to 4x4, the rest double the spatial size.
    s.decoder.input_shape = {d, 1, 1};
    s.decoder.layers = {
        LayerSpec::deconv(4, 1, 0, 512), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::deconv(4, 2, 1, 256), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::deconv(4, 2, 1, 128), LayerSpec::batch_norm(), LayerSpec::leaky_relu(0.2f),
        LayerSpec::deconv(4, 2, 1, c_img), LayerSpec::tanh01(),
    };

    s.discriminator.input_shape = {d, 1, 1};
    s.discriminator.layers = {
        LayerSpec::fully_connected(disc_h), LayerSpec::batch_norm(), LayerSpec::relu(),
        LayerSpec::fully_connected(32),     LayerSpec::batch_norm(), LayerSpec::relu(),
        LayerSpec::fully_connected(16),     LayerSpec::batch_norm(), LayerSpec::relu(),
        LayerSpec::fully_connected(1),      LayerSpec::sigmoid(),
    };
    return s;
}

int64_t NetworkParams::trainable_count() const {
    int64_t n = 0;
    for_each_trainable([&](const Tensor& t, bool) { n += t.numel(); });
    return n;
}

bool NetworkParams::all_finite() const {
    bool ok = true;
    for (const auto& lp : layers)
        for (const Tensor* t : {&lp.w, &lp.b, &lp.gamma, &lp.beta, &lp.run_mean, &lp.run_var})
            for (float v : t->v)
                if (!std::isfinite(v)) ok = false;
    return ok;
}

namespace {

void shape_params(const NetworkSpec& spec, NetworkParams& out) {
    const auto io = layer_io(spec);
    out.layers.resize(spec.layers.size());
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        auto& lp = out.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                lp.w = Tensor({int64_t(l.kernel) * l.kernel * io[i].in.c, l.out_channels});
                lp.b = Tensor({l.out_channels});
                break;
            case LayerKind::Deconv:
                lp.w = Tensor({io[i].in.c, int64_t(l.kernel) * l.kernel * l.out_channels});
                lp.b = Tensor({l.out_channels});
                break;
            case LayerKind::FullyConnected:
                lp.w = Tensor({io[i].in.numel(), l.out_channels});
                lp.b = Tensor({l.out_channels});
                break;
            case LayerKind::BatchNorm: {
                const int64_t c = io[i].in.c;
                lp.gamma = Tensor({c});
                lp.beta = Tensor({c});
                lp.run_mean = Tensor({c});
                lp.run_var = Tensor({c});
                break;
            }
            default:
                break;
        }
    }
}

}  // namespace

NetworkParams init_params(const NetworkSpec& spec, uint64_t seed) {
    NetworkParams p;
    shape_params(spec, p);
    Rng rng(seed);
    for (auto& lp : p.layers) {
        for (auto& v : lp.w.v) v = static_cast<float>(rng.next_gaussian()) * kWeightInitStd;
        lp.gamma.fill(1.0f);
        lp.run_var.fill(1.0f);
    }
    return p;
}

NetworkParams zeros_like(const NetworkSpec& spec) {
    NetworkParams p;
    shape_params(spec, p);
    return p;
}

Tensor forward(const NetworkSpec& spec, NetworkParams& params, const Tensor& input, Mode mode,
               ForwardContext* ctx) {
    const auto io = layer_io(spec);
    if (params.layers.size() != spec.layers.size())
        throw ShapeError("params do not match spec layer count");
    if (input.shape.empty()) throw ShapeError("empty input");
    const int64_t batch = input.shape[0];
    if (batch < 1) throw ShapeError("empty batch");
    if (mode == Mode::train && batch < 2)
        throw ShapeError("train-mode forward needs batch size >= 2 for batch statistics");
    const Shape3 in = spec.input_shape;
    if (input.numel() != batch * in.numel())
        throw ShapeError("input does not match network input shape " + in.str());
    if (in.h != 1 || in.w != 1) {
        if (input.shape.size() != 4 || input.shape[1] != in.h || input.shape[2] != in.w ||
            input.shape[3] != in.c)
            throw ShapeError("expected NHWC batch of shape " + in.str());
    }

    const Kernels& K = kern::active();
    if (ctx) {
        ctx->valid = false;
        ctx->mode = mode;
        ctx->acts.clear();
        ctx->bn.assign(spec.layers.size(), BnCache{});
        ctx->acts.push_back(input);
    }

    Tensor cur = input;
    Tensor bn_scratch;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const Shape3 si = io[i].in, so = io[i].out;
        Tensor out;
        switch (l.kind) {
            case LayerKind::Conv: {
                const int64_t rows = batch * so.h * so.w;
                const int64_t kk = int64_t(l.kernel) * l.kernel * si.c;
                float* col = col_scratch(rows * kk);
                im2col(cur.data(), batch, si.h, si.w, si.c, l.kernel, l.stride, l.padding,
                       so.h, so.w, col);
                out = make_activation(batch, so);
                K.gemm(false, false, rows, so.c, kk, 1.0f, col, kk,
                       params.layers[i].w.data(), so.c, 0.0f, out.data(), so.c);
                K.bias_add(out.data(), params.layers[i].b.data(), rows, so.c);
                break;
            }
            case LayerKind::Deconv: {
                const int64_t rows = batch * si.h * si.w;
                const int64_t kk = int64_t(l.kernel) * l.kernel * so.c;
                float* col = col_scratch(rows * kk);
                K.gemm(false, false, rows, kk, si.c, 1.0f, cur.data(), si.c,
                       params.layers[i].w.data(), kk, 0.0f, col, kk);
                out = make_activation(batch, so);
                col2im_add(col, batch, so.h, so.w, so.c, l.kernel, l.stride, l.padding,
                           si.h, si.w, out.data());
                K.bias_add(out.data(), params.layers[i].b.data(), batch * so.h * so.w, so.c);
                break;
            }
            case LayerKind::FullyConnected: {
                const int64_t din = si.numel();
                out = make_activation(batch, so);
                K.gemm(false, false, batch, so.c, din, 1.0f, cur.data(), din,
                       params.layers[i].w.data(), so.c, 0.0f, out.data(), so.c);
                K.bias_add(out.data(), params.layers[i].b.data(), batch, so.c);
                break;
            }
            case LayerKind::BatchNorm: {
                auto& lp = params.layers[i];
                const int64_t c = si.c;
                const int64_t rows = cur.numel() / c;
                out = make_activation(batch, so);
                std::vector<float> meanf(c), invstd(c);
                Tensor* xhat;
                if (ctx) {
                    ctx->bn[i].xhat = make_activation(batch, so);
                    xhat = &ctx->bn[i].xhat;
                } else {
                    bn_scratch = make_activation(batch, so);
                    xhat = &bn_scratch;
                }
                if (mode == Mode::train) {
                    std::vector<double> mean(c), var(c);
                    K.mean_var_cols(cur.data(), rows, c, mean.data(), var.data());
                    for (int64_t j = 0; j < c; ++j) {
                        meanf[j] = static_cast<float>(mean[j]);
                        invstd[j] = static_cast<float>(1.0 / std::sqrt(var[j] + kBnEps));
                    }
                    // unbiased variance feeds the running estimate
                    const double bessel =
                        rows > 1 ? double(rows) / double(rows - 1) : 1.0;
                    for (int64_t j = 0; j < c; ++j) {
                        lp.run_mean.v[j] = (1.0f - kBnMomentum) * lp.run_mean.v[j] +
                                           kBnMomentum * meanf[j];
                        lp.run_var.v[j] =
                            (1.0f - kBnMomentum) * lp.run_var.v[j] +
                            kBnMomentum * static_cast<float>(var[j] * bessel);
                    }
                } else {
                    for (int64_t j = 0; j < c; ++j) {
                        meanf[j] = lp.run_mean.v[j];
                        invstd[j] =
                            static_cast<float>(1.0 / std::sqrt(double(lp.run_var.v[j]) + kBnEps));
                    }
                }
                K.bn_fwd(cur.data(), out.data(), xhat->data(), rows, c, meanf.data(),
                         invstd.data(), lp.gamma.data(), lp.beta.data());
                if (ctx) ctx->bn[i].invstd = std::move(invstd);
                break;
            }
            case LayerKind::LeakyRelu:
            case LayerKind::Relu: {
                const float slope = l.kind == LayerKind::Relu ? 0.0f : l.negative_slope;
                out = make_activation(batch, so);
                K.leaky_relu_fwd(cur.data(), out.data(), cur.numel(), slope);
                break;
            }
            case LayerKind::Tanh01: {
                out = make_activation(batch, so);
                for (int64_t j = 0; j < cur.numel(); ++j)
                    out.v[j] = (std::tanh(cur.v[j]) + 1.0f) * 0.5f;
                break;
            }
            case LayerKind::Sigmoid: {
                out = make_activation(batch, so);
                for (int64_t j = 0; j < cur.numel(); ++j)
                    out.v[j] = 1.0f / (1.0f + std::exp(-cur.v[j]));
                break;
            }
        }
        cur = std::move(out);
        if (ctx) ctx->acts.push_back(cur);
    }

    check_finite(cur, "network output");
    if (ctx) ctx->valid = true;
    return cur;
}

Tensor forward_inference(const NetworkSpec& spec, const NetworkParams& params,
                         const Tensor& input) {
    // Inference never mutates params; the const_cast is confined here.
    return forward(spec, const_cast<NetworkParams&>(params), input, Mode::inference, nullptr);
}

Tensor backward(const NetworkSpec& spec, const NetworkParams& params, const ForwardContext& ctx,
                const Tensor& grad_output, NetworkParams& grads) {
    if (!ctx.valid) throw StateError("backward requires a completed forward context");
    if (ctx.mode != Mode::train)
        throw StateError("backward requires a train-mode forward context");
    if (ctx.acts.size() != spec.layers.size() + 1)
        throw StateError("forward context does not match spec");
    if (grads.layers.size() != spec.layers.size())
        throw ShapeError("grads do not match spec layer count");
    if (!grad_output.same_shape(ctx.acts.back()))
        throw ShapeError("grad_output shape does not match forward output");

    const auto io = layer_io(spec);
    const Kernels& K = kern::active();
    const int64_t batch = ctx.acts[0].shape[0];

    Tensor g = grad_output;
    for (size_t ii = spec.layers.size(); ii-- > 0;) {
        const auto& l = spec.layers[ii];
        const Shape3 si = io[ii].in, so = io[ii].out;
        const Tensor& x = ctx.acts[ii];
        const Tensor& y = ctx.acts[ii + 1];
        Tensor dx;
        switch (l.kind) {
            case LayerKind::Conv: {
                const int64_t rows = batch * so.h * so.w;
                const int64_t kk = int64_t(l.kernel) * l.kernel * si.c;
                auto& gl = grads.layers[ii];
                std::vector<double> bsum(so.c);
                K.col_sums(g.data(), bsum.data(), rows, so.c);
                for (int64_t j = 0; j < so.c; ++j) gl.b.v[j] += static_cast<float>(bsum[j]);

                float* col = col_scratch(rows * kk);
                K.gemm(false, true, rows, kk, so.c, 1.0f, g.data(), so.c,
                       params.layers[ii].w.data(), so.c, 0.0f, col, kk);
                dx = make_activation(batch, si);
                col2im_add(col, batch, si.h, si.w, si.c, l.kernel, l.stride, l.padding,
                           so.h, so.w, dx.data());

                im2col(x.data(), batch, si.h, si.w, si.c, l.kernel, l.stride, l.padding,
                       so.h, so.w, col);
                K.gemm(true, false, kk, so.c, rows, 1.0f, col, kk, g.data(), so.c, 1.0f,
                       gl.w.data(), so.c);
                break;
            }
            case LayerKind::Deconv: {
                const int64_t rows = batch * si.h * si.w;
                const int64_t kk = int64_t(l.kernel) * l.kernel * so.c;
                auto& gl = grads.layers[ii];
                std::vector<double> bsum(so.c);
                K.col_sums(g.data(), bsum.data(), batch * so.h * so.w, so.c);
                for (int64_t j = 0; j < so.c; ++j) gl.b.v[j] += static_cast<float>(bsum[j]);

                float* col = col_scratch(rows * kk);
                im2col(g.data(), batch, so.h, so.w, so.c, l.kernel, l.stride, l.padding,
                       si.h, si.w, col);
                dx = make_activation(batch, si);
                K.gemm(false, true, rows, si.c, kk, 1.0f, col, kk,
                       params.layers[ii].w.data(), kk, 0.0f, dx.data(), si.c);
                K.gemm(true, false, si.c, kk, rows, 1.0f, x.data(), si.c, col, kk, 1.0f,
                       gl.w.data(), kk);
                break;
            }
            case LayerKind::FullyConnected: {
                const int64_t din = si.numel();
                auto& gl = grads.layers[ii];
                std::vector<double> bsum(so.c);
                K.col_sums(g.data(), bsum.data(), batch, so.c);
                for (int64_t j = 0; j < so.c; ++j) gl.b.v[j] += static_cast<float>(bsum[j]);
                dx = make_activation(batch, si);
                K.gemm(false, true, batch, din, so.c, 1.0f, g.data(), so.c,
                       params.layers[ii].w.data(), so.c, 0.0f, dx.data(), din);
                K.gemm(true, false, din, so.c, batch, 1.0f, x.data(), din, g.data(), so.c,
                       1.0f, gl.w.data(), so.c);
                break;
            }
            case LayerKind::BatchNorm: {
                const int64_t c = si.c;
                const int64_t rows = g.numel() / c;
                const auto& cache = ctx.bn[ii];
                if (cache.xhat.numel() == 0)
                    throw StateError("missing batch-norm cache in forward context");
                auto& gl = grads.layers[ii];
                std::vector<double> sdy(c), sdyh(c);
                K.bn_bwd_reduce(g.data(), cache.xhat.data(), rows, c, sdy.data(), sdyh.data());
                std::vector<float> mean_dy(c), mean_dyh(c);
                for (int64_t j = 0; j < c; ++j) {
                    gl.beta.v[j] += static_cast<float>(sdy[j]);
                    gl.gamma.v[j] += static_cast<float>(sdyh[j]);
                    mean_dy[j] = static_cast<float>(sdy[j] / double(rows));
                    mean_dyh[j] = static_cast<float>(sdyh[j] / double(rows));
                }
                dx = make_activation(batch, si);
                K.bn_bwd_input(g.data(), cache.xhat.data(), dx.data(), rows, c,
                               params.layers[ii].gamma.data(), cache.invstd.data(),
                               mean_dy.data(), mean_dyh.data());
                break;
            }
            case LayerKind::LeakyRelu:
            case LayerKind::Relu: {
                const float slope = l.kind == LayerKind::Relu ? 0.0f : l.negative_slope;
                dx = make_activation(batch, si);
                K.leaky_relu_bwd(x.data(), g.data(), dx.data(), g.numel(), slope);
                break;
            }
            case LayerKind::Tanh01: {
                dx = make_activation(batch, si);
                for (int64_t j = 0; j < g.numel(); ++j) {
                    const float t = 2.0f * y.v[j] - 1.0f;
                    dx.v[j] = g.v[j] * (1.0f - t * t) * 0.5f;
                }
                break;
            }
            case LayerKind::Sigmoid: {
                dx = make_activation(batch, si);
                for (int64_t j = 0; j < g.numel(); ++j)
                    dx.v[j] = g.v[j] * y.v[j] * (1.0f - y.v[j]);
                break;
            }
        }
        g = std::move(dx);
    }
    return g;
}

namespace {

int square_side(const data::Image& img) {
    const int64_t per_channel = img.numel() / img.channels;
    const int s = static_cast<int>(std::lround(std::sqrt(double(per_channel))));
    if (int64_t(s) * s * img.channels != img.numel())
        throw ShapeError("image is not square");
    return s;
}

}  // namespace

Tensor pack_batch(const data::ImageDataset& ds, const std::vector<int64_t>& indices) {
    if (indices.empty()) throw ArgumentError("empty batch");
    const int C = ds.images.front().channels;
    const int S = square_side(ds.images.front());
    Tensor t({int64_t(indices.size()), S, S, C});
    for (size_t b = 0; b < indices.size(); ++b) {
        const auto& img = ds.images[static_cast<size_t>(indices[b])];
        float* dst = t.data() + b * int64_t(S) * S * C;
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                for (int c = 0; c < C; ++c)
                    dst[(int64_t(y) * S + x) * C + c] = img.pixels[(int64_t(c) * S + y) * S + x];
    }
    return t;
}

Tensor pack_image(const data::Image& img) {
    const int C = img.channels;
    const int S = square_side(img);
    Tensor t({1, S, S, C});
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            for (int c = 0; c < C; ++c)
                t.v[(int64_t(y) * S + x) * C + c] = img.pixels[(int64_t(c) * S + y) * S + x];
    return t;
}

}  // namespace ddrid::nn
