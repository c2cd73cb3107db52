#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "ddrid/kernels.hpp"
#include "ddrid/threadpool.hpp"

// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// is only reachable through the dispatch table when the CPU reports both.
//
// GEMM: BLIS-style packing with a 6x16 microkernel. B is packed fully up
// front; the M dimension is split into fixed-size blocks that run as pool
// jobs, so every output element sees the same accumulation order no matter
// how many workers execute.

namespace ddrid::kern {
namespace {

constexpr int64_t MR = 6;
constexpr int64_t NR = 16;
constexpr int64_t KC = 256;
constexpr int64_t MC = 72;  // multiple of MR

inline double hsum256d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// ---------------------------------------------------------------------------
// GEMM
// ---------------------------------------------------------------------------

struct MatView {
    const float* p;
    int64_t ld;
    bool trans;
    float at(int64_t r, int64_t c) const { return trans ? p[c * ld + r] : p[r * ld + c]; }
};

// B panel layout: for each kc block, ceil(n/NR) strips of kc x NR, zero-padded.
void pack_b(const MatView& b, int64_t k, int64_t n, std::vector<float>& buf) {
    const int64_t n_strips = (n + NR - 1) / NR;
    const int64_t k_blocks = (k + KC - 1) / KC;
    buf.assign(static_cast<size_t>(k_blocks * KC * n_strips * NR), 0.0f);
    for (int64_t kb = 0; kb < k_blocks; ++kb) {
        const int64_t k0 = kb * KC, kc = std::min(KC, k - k0);
        float* block = buf.data() + kb * KC * n_strips * NR;
        for (int64_t js = 0; js < n_strips; ++js) {
            const int64_t j0 = js * NR, jn = std::min<int64_t>(NR, n - j0);
            float* strip = block + js * KC * NR;
            if (!b.trans) {
                for (int64_t kk = 0; kk < kc; ++kk) {
                    const float* src = b.p + (k0 + kk) * b.ld + j0;
                    float* dst = strip + kk * NR;
                    std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(jn));
                    for (int64_t j = jn; j < NR; ++j) dst[j] = 0.0f;
                }
            } else {
                for (int64_t kk = 0; kk < kc; ++kk) {
                    float* dst = strip + kk * NR;
                    for (int64_t j = 0; j < jn; ++j) dst[j] = b.p[(j0 + j) * b.ld + (k0 + kk)];
                    for (int64_t j = jn; j < NR; ++j) dst[j] = 0.0f;
                }
            }
        }
    }
}

// A panel: MR-row strips, column-major within strip (k ascending), zero-padded.
void pack_a(const MatView& a, int64_t i0, int64_t mc, int64_t k0, int64_t kc, float* buf) {
    const int64_t m_strips = (mc + MR - 1) / MR;
    for (int64_t is = 0; is < m_strips; ++is) {
        const int64_t r0 = i0 + is * MR;
        const int64_t rn = std::min<int64_t>(MR, i0 + mc - r0);
        float* strip = buf + is * kc * MR;
        for (int64_t kk = 0; kk < kc; ++kk) {
            float* dst = strip + kk * MR;
            for (int64_t r = 0; r < rn; ++r) dst[r] = a.at(r0 + r, k0 + kk);
            for (int64_t r = rn; r < MR; ++r) dst[r] = 0.0f;
        }
    }
}

// 6x16 microkernel: C_tile = alpha*Ap*Bp + beta*C_tile, edge-safe.
void micro_6x16(int64_t kc, const float* ap, const float* bp, float* c, int64_t ldc,
                float alpha, float beta, int64_t m_eff, int64_t n_eff) {
    __m256 acc[MR][2];
    for (int64_t r = 0; r < MR; ++r) {
        acc[r][0] = _mm256_setzero_ps();
        acc[r][1] = _mm256_setzero_ps();
    }
    for (int64_t kk = 0; kk < kc; ++kk) {
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        for (int64_t r = 0; r < MR; ++r) {
            const __m256 av = _mm256_set1_ps(ap[r]);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
        ap += MR;
        bp += NR;
    }

    const __m256 va = _mm256_set1_ps(alpha);
    if (m_eff == MR && n_eff == NR) {
        for (int64_t r = 0; r < MR; ++r) {
            float* crow = c + r * ldc;
            __m256 lo = _mm256_mul_ps(va, acc[r][0]);
            __m256 hi = _mm256_mul_ps(va, acc[r][1]);
            if (beta != 0.0f) {
                const __m256 vb = _mm256_set1_ps(beta);
                lo = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow), lo);
                hi = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow + 8), hi);
            }
            _mm256_storeu_ps(crow, lo);
            _mm256_storeu_ps(crow + 8, hi);
        }
        return;
    }
    alignas(32) float tile[MR * NR];
    for (int64_t r = 0; r < MR; ++r) {
        _mm256_store_ps(tile + r * NR, acc[r][0]);
        _mm256_store_ps(tile + r * NR + 8, acc[r][1]);
    }
    for (int64_t r = 0; r < m_eff; ++r) {
        float* crow = c + r * ldc;
        for (int64_t j = 0; j < n_eff; ++j) {
            const float val = alpha * tile[r * NR + j];
            crow[j] = beta == 0.0f ? val : val + beta * crow[j];
        }
    }
}

void gemm_avx2(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
               float alpha, const float* a, int64_t lda, const float* b,
               int64_t ldb, float beta, float* c, int64_t ldc) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        for (int64_t i = 0; i < m; ++i) {
            float* crow = c + i * ldc;
            if (beta == 0.0f)
                std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
            else if (beta != 1.0f)
                for (int64_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        return;
    }

    const MatView av{a, lda, trans_a};
    const MatView bv{b, ldb, trans_b};

    static thread_local std::vector<float> bpack;
    pack_b(bv, k, n, bpack);
    const float* bbase = bpack.data();

    const int64_t n_strips = (n + NR - 1) / NR;
    const int64_t k_blocks = (k + KC - 1) / KC;
    const int64_t m_blocks = (m + MC - 1) / MC;

    parallel_for(m_blocks, [&](int64_t mb) {
        static thread_local std::vector<float> apack;
        apack.resize(static_cast<size_t>(MC * KC));
        const int64_t i0 = mb * MC, mc = std::min(MC, m - i0);
        const int64_t m_strips = (mc + MR - 1) / MR;
        for (int64_t kb = 0; kb < k_blocks; ++kb) {
            const int64_t k0 = kb * KC, kc = std::min(KC, k - k0);
            const float beta_eff = kb == 0 ? beta : 1.0f;
            pack_a(av, i0, mc, k0, kc, apack.data());
            const float* bblock = bbase + kb * KC * n_strips * NR;
            for (int64_t js = 0; js < n_strips; ++js) {
                const int64_t j0 = js * NR;
                const int64_t n_eff = std::min<int64_t>(NR, n - j0);
                const float* bstrip = bblock + js * KC * NR;
                for (int64_t is = 0; is < m_strips; ++is) {
                    const int64_t r0 = i0 + is * MR;
                    const int64_t m_eff = std::min<int64_t>(MR, i0 + mc - r0);
                    micro_6x16(kc, apack.data() + is * kc * MR, bstrip,
                               c + r0 * ldc + j0, ldc, alpha, beta_eff, m_eff, n_eff);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

constexpr int64_t kChunk = 1 << 16;

template <typename F>
void chunked(int64_t n, F&& body) {
    const int64_t jobs = (n + kChunk - 1) / kChunk;
    if (jobs <= 1) {
        body(0, n);
        return;
    }
    parallel_for(jobs, [&](int64_t j) {
        const int64_t lo = j * kChunk;
        body(lo, std::min(n, lo + kChunk));
    });
}

void leaky_relu_fwd_avx2(const float* x, float* y, int64_t n, float slope) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 vs = _mm256_set1_ps(slope);
        const __m256 zero = _mm256_setzero_ps();
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 v = _mm256_loadu_ps(x + i);
            const __m256 neg = _mm256_mul_ps(vs, v);
            const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GE_OQ);
            _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, v, mask));
        }
        for (; i < hi; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
    });
}

void leaky_relu_bwd_avx2(const float* x, const float* dy, float* dx, int64_t n, float slope) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 vs = _mm256_set1_ps(slope);
        const __m256 zero = _mm256_setzero_ps();
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 v = _mm256_loadu_ps(x + i);
            const __m256 g = _mm256_loadu_ps(dy + i);
            const __m256 neg = _mm256_mul_ps(vs, g);
            const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GE_OQ);
            _mm256_storeu_ps(dx + i, _mm256_blendv_ps(neg, g, mask));
        }
        for (; i < hi; ++i) dx[i] = x[i] >= 0.0f ? dy[i] : slope * dy[i];
    });
}

void add_avx2(const float* x, float* y, int64_t n) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
        for (; i < hi; ++i) y[i] += x[i];
    });
}

void axpy_avx2(float a, const float* x, float* y, int64_t n) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 va = _mm256_set1_ps(a);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
        for (; i < hi; ++i) y[i] += a * x[i];
    });
}

void scale_avx2(float a, float* x, int64_t n) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 va = _mm256_set1_ps(a);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
        for (; i < hi; ++i) x[i] *= a;
    });
}

void scaled_diff_avx2(float s, const float* x, const float* y, float* out, int64_t n) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 vs = _mm256_set1_ps(s);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
            _mm256_storeu_ps(out + i, _mm256_mul_ps(vs, d));
        }
        for (; i < hi; ++i) out[i] = s * (x[i] - y[i]);
    });
}

// ---------------------------------------------------------------------------
// rows x channels
// ---------------------------------------------------------------------------

void bias_add_avx2(float* x, const float* bias, int64_t rows, int64_t channels) {
    const int64_t rows_per_job = std::max<int64_t>(1, kChunk / std::max<int64_t>(1, channels));
    parallel_for((rows + rows_per_job - 1) / rows_per_job, [&](int64_t job) {
        const int64_t r0 = job * rows_per_job, r1 = std::min(rows, r0 + rows_per_job);
        for (int64_t r = r0; r < r1; ++r) {
            float* p = x + r * channels;
            int64_t c = 0;
            for (; c + 8 <= channels; c += 8)
                _mm256_storeu_ps(p + c, _mm256_add_ps(_mm256_loadu_ps(p + c), _mm256_loadu_ps(bias + c)));
            for (; c < channels; ++c) p[c] += bias[c];
        }
    });
}

// Accumulates one row of floats into a double accumulator array.
inline void acc_row(const float* p, double* acc, int64_t channels) {
    int64_t c = 0;
    for (; c + 8 <= channels; c += 8) {
        const __m256 v = _mm256_loadu_ps(p + c);
        const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
        const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
        _mm256_storeu_pd(acc + c, _mm256_add_pd(_mm256_loadu_pd(acc + c), lo));
        _mm256_storeu_pd(acc + c + 4, _mm256_add_pd(_mm256_loadu_pd(acc + c + 4), hi));
    }
    for (; c < channels; ++c) acc[c] += p[c];
}

void col_sums_avx2(const float* x, double* out, int64_t rows, int64_t channels) {
    std::fill(out, out + channels, 0.0);
    for (int64_t r = 0; r < rows; ++r) acc_row(x + r * channels, out, channels);
}

void mean_var_cols_avx2(const float* x, int64_t rows, int64_t channels,
                        double* mean, double* var) {
    std::vector<double> s(static_cast<size_t>(channels), 0.0), s2(static_cast<size_t>(channels), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* p = x + r * channels;
        int64_t c = 0;
        for (; c + 8 <= channels; c += 8) {
            const __m256 v = _mm256_loadu_ps(p + c);
            const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
            const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
            _mm256_storeu_pd(&s[c], _mm256_add_pd(_mm256_loadu_pd(&s[c]), lo));
            _mm256_storeu_pd(&s[c + 4], _mm256_add_pd(_mm256_loadu_pd(&s[c + 4]), hi));
            _mm256_storeu_pd(&s2[c], _mm256_fmadd_pd(lo, lo, _mm256_loadu_pd(&s2[c])));
            _mm256_storeu_pd(&s2[c + 4], _mm256_fmadd_pd(hi, hi, _mm256_loadu_pd(&s2[c + 4])));
        }
        for (; c < channels; ++c) {
            const double v = p[c];
            s[c] += v;
            s2[c] += v * v;
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (int64_t c = 0; c < channels; ++c) {
        mean[c] = s[c] * inv;
        const double v = s2[c] * inv - mean[c] * mean[c];
        var[c] = v > 0.0 ? v : 0.0;
    }
}

void bn_fwd_avx2(const float* x, float* y, float* xhat, int64_t rows, int64_t channels,
                 const float* mean, const float* invstd, const float* gamma, const float* beta) {
    const int64_t rows_per_job = std::max<int64_t>(1, kChunk / std::max<int64_t>(1, channels));
    parallel_for((rows + rows_per_job - 1) / rows_per_job, [&](int64_t job) {
        const int64_t r0 = job * rows_per_job, r1 = std::min(rows, r0 + rows_per_job);
        for (int64_t r = r0; r < r1; ++r) {
            const float* xp = x + r * channels;
            float* yp = y + r * channels;
            float* hp = xhat + r * channels;
            int64_t c = 0;
            for (; c + 8 <= channels; c += 8) {
                const __m256 h = _mm256_mul_ps(
                    _mm256_sub_ps(_mm256_loadu_ps(xp + c), _mm256_loadu_ps(mean + c)),
                    _mm256_loadu_ps(invstd + c));
                _mm256_storeu_ps(hp + c, h);
                _mm256_storeu_ps(yp + c,
                                 _mm256_fmadd_ps(_mm256_loadu_ps(gamma + c), h, _mm256_loadu_ps(beta + c)));
            }
            for (; c < channels; ++c) {
                const float h = (xp[c] - mean[c]) * invstd[c];
                hp[c] = h;
                yp[c] = gamma[c] * h + beta[c];
            }
        }
    });
}

void bn_bwd_reduce_avx2(const float* dy, const float* xhat, int64_t rows, int64_t channels,
                        double* sum_dy, double* sum_dy_xhat) {
    std::fill(sum_dy, sum_dy + channels, 0.0);
    std::fill(sum_dy_xhat, sum_dy_xhat + channels, 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* dp = dy + r * channels;
        const float* hp = xhat + r * channels;
        int64_t c = 0;
        for (; c + 8 <= channels; c += 8) {
            const __m256 d = _mm256_loadu_ps(dp + c);
            const __m256 h = _mm256_loadu_ps(hp + c);
            const __m256d dlo = _mm256_cvtps_pd(_mm256_castps256_ps128(d));
            const __m256d dhi = _mm256_cvtps_pd(_mm256_extractf128_ps(d, 1));
            const __m256d hlo = _mm256_cvtps_pd(_mm256_castps256_ps128(h));
            const __m256d hhi = _mm256_cvtps_pd(_mm256_extractf128_ps(h, 1));
            _mm256_storeu_pd(sum_dy + c, _mm256_add_pd(_mm256_loadu_pd(sum_dy + c), dlo));
            _mm256_storeu_pd(sum_dy + c + 4, _mm256_add_pd(_mm256_loadu_pd(sum_dy + c + 4), dhi));
            _mm256_storeu_pd(sum_dy_xhat + c,
                             _mm256_fmadd_pd(dlo, hlo, _mm256_loadu_pd(sum_dy_xhat + c)));
            _mm256_storeu_pd(sum_dy_xhat + c + 4,
                             _mm256_fmadd_pd(dhi, hhi, _mm256_loadu_pd(sum_dy_xhat + c + 4)));
        }
        for (; c < channels; ++c) {
            sum_dy[c] += dp[c];
            sum_dy_xhat[c] += static_cast<double>(dp[c]) * hp[c];
        }
    }
}

void bn_bwd_input_avx2(const float* dy, const float* xhat, float* dx, int64_t rows,
                       int64_t channels, const float* gamma, const float* invstd,
                       const float* mean_dy, const float* mean_dy_xhat) {
    const int64_t rows_per_job = std::max<int64_t>(1, kChunk / std::max<int64_t>(1, channels));
    parallel_for((rows + rows_per_job - 1) / rows_per_job, [&](int64_t job) {
        const int64_t r0 = job * rows_per_job, r1 = std::min(rows, r0 + rows_per_job);
        for (int64_t r = r0; r < r1; ++r) {
            const float* dp = dy + r * channels;
            const float* hp = xhat + r * channels;
            float* op = dx + r * channels;
            int64_t c = 0;
            for (; c + 8 <= channels; c += 8) {
                const __m256 centered = _mm256_sub_ps(
                    _mm256_sub_ps(_mm256_loadu_ps(dp + c), _mm256_loadu_ps(mean_dy + c)),
                    _mm256_mul_ps(_mm256_loadu_ps(hp + c), _mm256_loadu_ps(mean_dy_xhat + c)));
                const __m256 g =
                    _mm256_mul_ps(_mm256_loadu_ps(gamma + c), _mm256_loadu_ps(invstd + c));
                _mm256_storeu_ps(op + c, _mm256_mul_ps(g, centered));
            }
            for (; c < channels; ++c) {
                op[c] = gamma[c] * invstd[c] * (dp[c] - mean_dy[c] - hp[c] * mean_dy_xhat[c]);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

double sum_avx2(const float* x, int64_t n) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
        acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
    }
    double s = hsum256d(acc0) + hsum256d(acc1);
    for (; i < n; ++i) s += x[i];
    return s;
}

double dot_avx2(const float* x, const float* y, int64_t n) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 a = _mm256_loadu_ps(x + i);
        const __m256 b = _mm256_loadu_ps(y + i);
        acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(a)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(b)), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(a, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(b, 1)), acc1);
    }
    double s = hsum256d(acc0) + hsum256d(acc1);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

double sqdist_avx2(const float* x, const float* y, int64_t n) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 a = _mm256_loadu_ps(x + i);
        const __m256 b = _mm256_loadu_ps(y + i);
        const __m256d dlo = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(a)),
                                          _mm256_cvtps_pd(_mm256_castps256_ps128(b)));
        const __m256d dhi = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(a, 1)),
                                          _mm256_cvtps_pd(_mm256_extractf128_ps(b, 1)));
        acc0 = _mm256_fmadd_pd(dlo, dlo, acc0);
        acc1 = _mm256_fmadd_pd(dhi, dhi, acc1);
    }
    double s = hsum256d(acc0) + hsum256d(acc1);
    for (; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += d * d;
    }
    return s;
}

void adam_step_avx2(float* p, const float* g, float* m, float* v, int64_t n,
                    float lr, float beta1, float beta2, float eps,
                    float bias_c1, float bias_c2, float weight_decay) {
    chunked(n, [&](int64_t lo, int64_t hi) {
        const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
        const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
        const __m256 vc1 = _mm256_set1_ps(bias_c1), vc2 = _mm256_set1_ps(bias_c2);
        const __m256 veps = _mm256_set1_ps(eps), vlr = _mm256_set1_ps(lr);
        const __m256 vwd = _mm256_set1_ps(lr * weight_decay);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 gv = _mm256_loadu_ps(g + i);
            __m256 mv = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(vb1c, gv));
            __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i),
                                        _mm256_mul_ps(vb2c, _mm256_mul_ps(gv, gv)));
            _mm256_storeu_ps(m + i, mv);
            _mm256_storeu_ps(v + i, vv);
            const __m256 mhat = _mm256_mul_ps(mv, vc1);
            const __m256 vhat = _mm256_mul_ps(vv, vc2);
            const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
            const __m256 pv = _mm256_loadu_ps(p + i);
            __m256 upd = _mm256_mul_ps(vlr, _mm256_div_ps(mhat, denom));
            upd = _mm256_fmadd_ps(vwd, pv, upd);
            _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, upd));
        }
        for (; i < hi; ++i) {
            m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
            const float mhat = m[i] * bias_c1;
            const float vhat = v[i] * bias_c2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps)) + lr * weight_decay * p[i];
        }
    });
}

}  // namespace

bool cpu_has_avx2_fma() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Kernels& avx2() {
    static const Kernels k = {
        "avx2",
        gemm_avx2,
        leaky_relu_fwd_avx2,
        leaky_relu_bwd_avx2,
        add_avx2,
        axpy_avx2,
        scale_avx2,
        scaled_diff_avx2,
        bias_add_avx2,
        col_sums_avx2,
        mean_var_cols_avx2,
        bn_fwd_avx2,
        bn_bwd_reduce_avx2,
        bn_bwd_input_avx2,
        sum_avx2,
        dot_avx2,
        sqdist_avx2,
        adam_step_avx2,
    };
    return k;
}

}  // namespace ddrid::kern
