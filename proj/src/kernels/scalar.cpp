#include <cmath>
#include <cstring>
#include <vector>

#include "ddrid/kernels.hpp"
#include "ddrid/threadpool.hpp"

// Reference kernels. Plain loops with a fixed accumulation order (k ascending
// per output element); the SIMD variants are tested against these.

namespace ddrid::kern {
namespace {

inline const float* row_ptr(const float* a, int64_t lda, int64_t r) { return a + r * lda; }

void gemm_scalar(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 float alpha, const float* a, int64_t lda, const float* b,
                 int64_t ldb, float beta, float* c, int64_t ldc) {
    auto at = [&](int64_t i, int64_t p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };

    // i,k,j order: contiguous C-row updates, k ascending per element.
    const int64_t row_block = 64;
    int64_t n_jobs = (m + row_block - 1) / row_block;
    parallel_for(n_jobs, [&](int64_t job) {
        int64_t i0 = job * row_block, i1 = std::min(m, i0 + row_block);
        for (int64_t i = i0; i < i1; ++i) {
            float* crow = c + i * ldc;
            if (beta == 0.0f) {
                std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
            } else if (beta != 1.0f) {
                for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
            }
            for (int64_t p = 0; p < k; ++p) {
                const float av = alpha * at(i, p);
                if (av == 0.0f) continue;
                if (!trans_b) {
                    const float* brow = row_ptr(b, ldb, p);
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
                } else {
                    for (int64_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
                }
            }
        }
    });
}

void leaky_relu_fwd_scalar(const float* x, float* y, int64_t n, float slope) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_bwd_scalar(const float* x, const float* dy, float* dx, int64_t n, float slope) {
    for (int64_t i = 0; i < n; ++i) dx[i] = x[i] >= 0.0f ? dy[i] : slope * dy[i];
}

void add_scalar(const float* x, float* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += x[i];
}

void axpy_scalar(float a, const float* x, float* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(float a, float* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

void scaled_diff_scalar(float s, const float* x, const float* y, float* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = s * (x[i] - y[i]);
}

void bias_add_scalar(float* x, const float* bias, int64_t rows, int64_t channels) {
    for (int64_t r = 0; r < rows; ++r) {
        float* p = x + r * channels;
        for (int64_t c = 0; c < channels; ++c) p[c] += bias[c];
    }
}

void col_sums_scalar(const float* x, double* out, int64_t rows, int64_t channels) {
    for (int64_t c = 0; c < channels; ++c) out[c] = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const float* p = x + r * channels;
        for (int64_t c = 0; c < channels; ++c) out[c] += p[c];
    }
}

void mean_var_cols_scalar(const float* x, int64_t rows, int64_t channels,
                          double* mean, double* var) {
    std::vector<double> s(static_cast<size_t>(channels), 0.0), s2(static_cast<size_t>(channels), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* p = x + r * channels;
        for (int64_t c = 0; c < channels; ++c) {
            const double v = p[c];
            s[c] += v;
            s2[c] += v * v;
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (int64_t c = 0; c < channels; ++c) {
        mean[c] = s[c] * inv;
        double v = s2[c] * inv - mean[c] * mean[c];
        var[c] = v > 0.0 ? v : 0.0;
    }
}

void bn_fwd_scalar(const float* x, float* y, float* xhat, int64_t rows, int64_t channels,
                   const float* mean, const float* invstd, const float* gamma, const float* beta) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* xp = x + r * channels;
        float* yp = y + r * channels;
        float* hp = xhat + r * channels;
        for (int64_t c = 0; c < channels; ++c) {
            const float h = (xp[c] - mean[c]) * invstd[c];
            hp[c] = h;
            yp[c] = gamma[c] * h + beta[c];
        }
    }
}

void bn_bwd_reduce_scalar(const float* dy, const float* xhat, int64_t rows, int64_t channels,
                          double* sum_dy, double* sum_dy_xhat) {
    for (int64_t c = 0; c < channels; ++c) {
        sum_dy[c] = 0.0;
        sum_dy_xhat[c] = 0.0;
    }
    for (int64_t r = 0; r < rows; ++r) {
        const float* dp = dy + r * channels;
        const float* hp = xhat + r * channels;
        for (int64_t c = 0; c < channels; ++c) {
            sum_dy[c] += dp[c];
            sum_dy_xhat[c] += static_cast<double>(dp[c]) * hp[c];
        }
    }
}

void bn_bwd_input_scalar(const float* dy, const float* xhat, float* dx, int64_t rows,
                         int64_t channels, const float* gamma, const float* invstd,
                         const float* mean_dy, const float* mean_dy_xhat) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* dp = dy + r * channels;
        const float* hp = xhat + r * channels;
        float* op = dx + r * channels;
        for (int64_t c = 0; c < channels; ++c) {
            op[c] = gamma[c] * invstd[c] * (dp[c] - mean_dy[c] - hp[c] * mean_dy_xhat[c]);
        }
    }
}

double sum_scalar(const float* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double dot_scalar(const float* x, const float* y, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

double sqdist_scalar(const float* x, const float* y, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += d * d;
    }
    return s;
}

void adam_step_scalar(float* p, const float* g, float* m, float* v, int64_t n,
                      float lr, float beta1, float beta2, float eps,
                      float bias_c1, float bias_c2, float weight_decay) {
    for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        const float mhat = m[i] * bias_c1;
        const float vhat = v[i] * bias_c2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps)) + lr * weight_decay * p[i];
    }
}

}  // namespace

const Kernels& scalar() {
    static const Kernels k = {
        "scalar",
        gemm_scalar,
        leaky_relu_fwd_scalar,
        leaky_relu_bwd_scalar,
        add_scalar,
        axpy_scalar,
        scale_scalar,
        scaled_diff_scalar,
        bias_add_scalar,
        col_sums_scalar,
        mean_var_cols_scalar,
        bn_fwd_scalar,
        bn_bwd_reduce_scalar,
        bn_bwd_input_scalar,
        sum_scalar,
        dot_scalar,
        sqdist_scalar,
        adam_step_scalar,
    };
    return k;
}

}  // namespace ddrid::kern
