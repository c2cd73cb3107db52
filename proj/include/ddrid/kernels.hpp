#pragma once

#include <cstdint>
#include <string>

namespace ddrid::kern {

// Data-parallel arithmetic kernels behind the nn/train hot loops. One scalar
// reference implementation plus SIMD variants selected at runtime; all
// variants share this table and are equivalence-tested against each other.
//
// Conventions: matrices are row-major float32. "rows x channels" layouts keep
// channels contiguous (activation tensors are [batch*height*width, channels]).
// Reductions accumulate in double with a fixed element order, so results are
// independent of worker count.
struct Kernels {
    const char* name;

    // C = alpha * op(A) * op(B) + beta * C where op is optional transpose.
    // op(A) is m x k, op(B) is k x n, C is m x n with leading dimension ldc.
    void (*gemm)(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 float alpha, const float* a, int64_t lda, const float* b,
                 int64_t ldb, float beta, float* c, int64_t ldc);

    // slope=0 gives plain ReLU.
    void (*leaky_relu_fwd)(const float* x, float* y, int64_t n, float slope);
    void (*leaky_relu_bwd)(const float* x, const float* dy, float* dx, int64_t n, float slope);

    void (*add)(const float* x, float* y, int64_t n);             // y += x
    void (*axpy)(float a, const float* x, float* y, int64_t n);   // y += a*x
    void (*scale)(float a, float* x, int64_t n);                  // x *= a
    void (*scaled_diff)(float s, const float* x, const float* y, float* out, int64_t n);  // out = s*(x-y)

    void (*bias_add)(float* x, const float* bias, int64_t rows, int64_t channels);
    void (*col_sums)(const float* x, double* out, int64_t rows, int64_t channels);
    void (*mean_var_cols)(const float* x, int64_t rows, int64_t channels,
                          double* mean, double* var);  // biased variance
    void (*bn_fwd)(const float* x, float* y, float* xhat, int64_t rows, int64_t channels,
                   const float* mean, const float* invstd, const float* gamma, const float* beta);
    void (*bn_bwd_reduce)(const float* dy, const float* xhat, int64_t rows, int64_t channels,
                          double* sum_dy, double* sum_dy_xhat);
    void (*bn_bwd_input)(const float* dy, const float* xhat, float* dx, int64_t rows,
                         int64_t channels, const float* gamma, const float* invstd,
                         const float* mean_dy, const float* mean_dy_xhat);

    double (*sum)(const float* x, int64_t n);
    double (*dot)(const float* x, const float* y, int64_t n);
    double (*sqdist)(const float* x, const float* y, int64_t n);

    // One Adam step over a flat parameter array. bias_c1/bias_c2 are the
    // precomputed 1/(1-beta^t) correction factors; weight decay is applied
    // as the decoupled lr*wd*p term.
    void (*adam_step)(float* p, const float* g, float* m, float* v, int64_t n,
                      float lr, float beta1, float beta2, float eps,
                      float bias_c1, float bias_c2, float weight_decay);
};

const Kernels& scalar();
#if defined(__x86_64__) || defined(_M_X64)
const Kernels& avx2();
bool cpu_has_avx2_fma();
#endif

// Active table: best available variant, DDRID_KERNELS env override honored
// ("scalar" or "avx2").
const Kernels& active();

// Swaps the active table; throws ArgumentError for unknown/unsupported names.
void force(const std::string& name);

}  // namespace ddrid::kern
