#pragma once

// Finite-difference gradient harness shared by the nn unit tests and the
// acceptance suite. The FD side runs on the double-precision brute-force
// oracle (oracle_net.hpp); the analytic side is the production float32
// backward pass.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ddrid/nn.hpp"
#include "ddrid/rng.hpp"
#include "oracle_net.hpp"

namespace gradcheck {

using ddrid::Rng;
using ddrid::Tensor;
using namespace ddrid::nn;

inline Tensor random_input(Rng& rng, int64_t batch, const Shape3& s, float lo = -1.0f,
                           float hi = 1.0f) {
    Tensor t = s.h == 1 && s.w == 1 ? Tensor({batch, s.c}) : Tensor({batch, s.h, s.w, s.c});
    for (auto& v : t.v) v = lo + static_cast<float>(rng.next_double()) * (hi - lo);
    return t;
}

struct Result {
    double max_rel = 0.0;
    int64_t checked = 0;
    int64_t skipped = 0;  // coordinates where FD straddles an activation kink
    int64_t failed = 0;   // rel error above tolerance
};

// Compares one analytic value against the h and h/2 central quotients. The
// half-step probe skips kink-straddling coordinates (quotients disagree by
// O(1) there instead of O(h^2)); richardson combines the two quotients to
// cancel the O(h^2) truncation term for deep compositions.
inline void compare_fd(Result& res, float analytic, double fd_h, double fd_h2, double tol,
                       bool richardson) {
    if (std::abs(fd_h - fd_h2) > 1e-4 * std::max(1.0, std::abs(fd_h))) {
        ++res.skipped;
        return;
    }
    const double numeric = richardson ? (4.0 * fd_h2 - fd_h) / 3.0 : fd_h;
    const double denom = std::max({1.0, std::abs(double(analytic)), std::abs(numeric)});
    const double rel = std::abs(double(analytic) - numeric) / denom;
    res.max_rel = std::max(res.max_rel, rel);
    ++res.checked;
    if (rel > tol) ++res.failed;
}

// Central finite differences (step h) of || forward(x) - target ||^2 against
// the analytic backward pass, sampling up to max_per_tensor coordinates per
// parameter tensor plus the input gradient.
inline Result grad_check(const NetworkSpec& spec, NetworkParams params, const Tensor& x,
                         uint64_t seed, double h = 1e-3, int64_t max_per_tensor = 200,
                         bool richardson = false, double tol = 1e-4) {
    Rng rng(seed);
    const Shape3 os = spec.output_shape();
    Tensor target = random_input(rng, x.shape[0], os);
    const int64_t batch = x.shape[0];
    const oracle::Vec x_d = oracle::to_double(x.v);
    const oracle::Vec target_d = oracle::to_double(target.v);

    NetworkParams work = params;
    ForwardContext ctx;
    Tensor out = forward(spec, work, x, Mode::train, &ctx);
    Tensor dout(out.shape);
    for (int64_t i = 0; i < out.numel(); ++i) dout.v[i] = 2.0f * (out.v[i] - target.v[i]);
    NetworkParams grads = zeros_like(spec);
    Tensor dx = backward(spec, work, ctx, dout, grads);

    auto dparams = oracle::DoubleParams::from(params);
    auto loss_at = [&](const oracle::Vec& xin) {
        return oracle::sq_loss(oracle::forward(spec, dparams, xin, batch), target_d);
    };

    Result res;
    auto probe = [&](double& slot, const oracle::Vec& xin, float analytic) {
        const double orig = slot;
        slot = orig + h;
        const double lp = loss_at(xin);
        slot = orig - h;
        const double lm = loss_at(xin);
        slot = orig + 0.5 * h;
        const double lp2 = loss_at(xin);
        slot = orig - 0.5 * h;
        const double lm2 = loss_at(xin);
        slot = orig;
        compare_fd(res, analytic, (lp - lm) / (2.0 * h), (lp2 - lm2) / h, tol, richardson);
    };

    for (size_t li = 0; li < params.layers.size(); ++li) {
        oracle::Vec* tensors_d[] = {&dparams.layers[li].w, &dparams.layers[li].b,
                                    &dparams.layers[li].gamma, &dparams.layers[li].beta};
        Tensor* tensors_g[] = {&grads.layers[li].w, &grads.layers[li].b, &grads.layers[li].gamma,
                               &grads.layers[li].beta};
        for (int ti = 0; ti < 4; ++ti) {
            oracle::Vec* pd = tensors_d[ti];
            Tensor* gt = tensors_g[ti];
            const int64_t n = static_cast<int64_t>(pd->size());
            if (n == 0) continue;
            const int64_t stride = std::max<int64_t>(1, n / max_per_tensor);
            for (int64_t j = 0; j < n; j += stride) probe((*pd)[j], x_d, gt->v[j]);
        }
    }
    oracle::Vec xp = x_d;
    const int64_t stride = std::max<int64_t>(1, x.numel() / max_per_tensor);
    for (int64_t j = 0; j < x.numel(); j += stride) probe(xp[j], xp, dx.v[j]);
    return res;
}

// Smallest |pre-activation| feeding a leaky-relu/relu layer.
inline double leaky_margin(const NetworkSpec& spec, NetworkParams params, const Tensor& x) {
    ForwardContext ctx;
    forward(spec, params, x, Mode::train, &ctx);
    double m = 1e9;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto k = spec.layers[i].kind;
        if (k == LayerKind::LeakyRelu || k == LayerKind::Relu)
            for (float v : ctx.acts[i].v) m = std::min(m, std::abs(double(v)));
    }
    return m;
}

}  // namespace gradcheck
