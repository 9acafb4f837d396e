#ifndef ZSNMT_KERNELS_HPP
#define ZSNMT_KERNELS_HPP

#include <cmath>
#include <cstdint>
#include <vector>

// Dense kernels behind the autodiff graph and the decoder. Every kernel has a
// serial reference path and an OpenMP path selected at runtime; the parallel
// path assigns each output element to exactly one thread and performs each
// per-element reduction in the same order as the serial path, so results do
// not depend on the backend or the thread count.

namespace zsnmt::kernels {

enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);

// Ops smaller than this (in multiply-accumulate or element counts) run
// serially even on the parallel backend: two-thread speedup cannot repay the
// fork-join overhead there. Purely shape-dependent, so results stay
// reproducible.
constexpr std::int64_t kMinParallelWork = 1 << 17;

inline bool use_parallel(std::int64_t work) {
    return backend() == Backend::Parallel && work >= kMinParallelWork;
}

// ------------------------------- matmul -------------------------------

// C[M,N] = A[M,K] * B[K,N]   (+= if Acc)
// Rows go four at a time so each loaded B row feeds four accumulation
// streams; per-element accumulation order over kk is unchanged.
template <typename T, bool Acc = false>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    auto row = [=](int i) {
        T* ci = c + std::int64_t(i) * n;
        if (!Acc)
            for (int j = 0; j < n; ++j) ci[j] = T(0);
        const T* ai = a + std::int64_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const T aik = ai[kk];
            const T* bk = b + std::int64_t(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    };
    auto quad = [=](int i) {
        T* c0 = c + std::int64_t(i) * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        if (!Acc)
            for (int j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T(0);
        const T* ai = a + std::int64_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const T a0 = ai[kk], a1 = ai[k + kk], a2 = ai[2 * k + kk], a3 = ai[3 * k + kk];
            const T* bk = b + std::int64_t(kk) * n;
            for (int j = 0; j < n; ++j) {
                c0[j] += a0 * bk[j];
                c1[j] += a1 * bk[j];
                c2[j] += a2 * bk[j];
                c3[j] += a3 * bk[j];
            }
        }
    };
    const int m4 = m / 4;
    if (use_parallel(std::int64_t(m) * k * n)) {
#pragma omp parallel for schedule(static)
        for (int q = 0; q < m4; ++q) quad(4 * q);
    } else {
        for (int q = 0; q < m4; ++q) quad(4 * q);
    }
    for (int i = 4 * m4; i < m; ++i) row(i);
}

namespace detail {
// reusable per-thread scratch for transposed operands
template <typename T>
inline std::vector<T>& scratch() {
    thread_local std::vector<T> buf;
    return buf;
}
}  // namespace detail

// C[M,N] = A[M,K] * B[N,K]^T. Large shapes go through a transposed copy of B
// so the inner loops run in the vectorizable saxpy form; the per-element
// accumulation order over kk is unchanged, so results match the direct form.
template <typename T, bool Acc = false>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    if (std::int64_t(m) * k * n >= (1 << 16)) {
        auto& bt = detail::scratch<T>();
        if (static_cast<std::int64_t>(bt.size()) < std::int64_t(k) * n)
            bt.resize(std::size_t(k) * n);
        for (int j = 0; j < n; ++j)
            for (int kk = 0; kk < k; ++kk) bt[std::size_t(kk) * n + j] = b[std::size_t(j) * k + kk];
        matmul_nn<T, Acc>(a, bt.data(), c, m, k, n);
        return;
    }
    auto row = [=](int i) {
        const T* ai = a + std::int64_t(i) * k;
        T* ci = c + std::int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + std::int64_t(j) * k;
            T acc = T(0);
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            if (Acc)
                ci[j] += acc;
            else
                ci[j] = acc;
        }
    };
    if (use_parallel(std::int64_t(m) * k * n)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) row(i);
    } else {
        for (int i = 0; i < m; ++i) row(i);
    }
}

// C[K,N] = A[M,K]^T * B[M,N]; output rows in blocks of four as above
template <typename T, bool Acc = false>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    auto row = [=](int kk) {
        T* ck = c + std::int64_t(kk) * n;
        if (!Acc)
            for (int j = 0; j < n; ++j) ck[j] = T(0);
        for (int i = 0; i < m; ++i) {
            const T aik = a[std::int64_t(i) * k + kk];
            const T* bi = b + std::int64_t(i) * n;
            for (int j = 0; j < n; ++j) ck[j] += aik * bi[j];
        }
    };
    auto quad = [=](int kk) {
        T* c0 = c + std::int64_t(kk) * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        if (!Acc)
            for (int j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T(0);
        for (int i = 0; i < m; ++i) {
            const T* aik = a + std::int64_t(i) * k + kk;
            const T a0 = aik[0], a1 = aik[1], a2 = aik[2], a3 = aik[3];
            const T* bi = b + std::int64_t(i) * n;
            for (int j = 0; j < n; ++j) {
                c0[j] += a0 * bi[j];
                c1[j] += a1 * bi[j];
                c2[j] += a2 * bi[j];
                c3[j] += a3 * bi[j];
            }
        }
    };
    const int k4 = k / 4;
    if (use_parallel(std::int64_t(m) * k * n)) {
#pragma omp parallel for schedule(static)
        for (int q = 0; q < k4; ++q) quad(4 * q);
    } else {
        for (int q = 0; q < k4; ++q) quad(4 * q);
    }
    for (int kk = 4 * k4; kk < k; ++kk) row(kk);
}

// ---------------------------- batched matmul ----------------------------

// C[g] = A[g] * B[g] for g in [0, groups); A [groups,M,K], B [groups,K,N].
template <typename T, bool Acc = false>
void bmm_nn(const T* a, const T* b, T* c, int groups, int m, int k, int n) {
    auto row = [=](int g, int i) {
        const T* ag = a + std::int64_t(g) * m * k + std::int64_t(i) * k;
        const T* bg = b + std::int64_t(g) * k * n;
        T* cg = c + std::int64_t(g) * m * n + std::int64_t(i) * n;
        if (!Acc)
            for (int j = 0; j < n; ++j) cg[j] = T(0);
        for (int kk = 0; kk < k; ++kk) {
            const T aik = ag[kk];
            const T* bk = bg + std::int64_t(kk) * n;
            for (int j = 0; j < n; ++j) cg[j] += aik * bk[j];
        }
    };
    if (use_parallel(std::int64_t(groups) * m * k * n)) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int g = 0; g < groups; ++g)
            for (int i = 0; i < m; ++i) row(g, i);
    } else {
        for (int g = 0; g < groups; ++g)
            for (int i = 0; i < m; ++i) row(g, i);
    }
}

// C[g] = A[g] * B[g]^T; A [groups,M,K], B [groups,N,K].
template <typename T, bool Acc = false>
void bmm_nt(const T* a, const T* b, T* c, int groups, int m, int k, int n) {
    auto row = [=](int g, int i) {
        const T* ai = a + std::int64_t(g) * m * k + std::int64_t(i) * k;
        const T* bg = b + std::int64_t(g) * n * k;
        T* ci = c + std::int64_t(g) * m * n + std::int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = bg + std::int64_t(j) * k;
            T acc = T(0);
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            if (Acc)
                ci[j] += acc;
            else
                ci[j] = acc;
        }
    };
    if (use_parallel(std::int64_t(groups) * m * k * n)) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int g = 0; g < groups; ++g)
            for (int i = 0; i < m; ++i) row(g, i);
    } else {
        for (int g = 0; g < groups; ++g)
            for (int i = 0; i < m; ++i) row(g, i);
    }
}

// C[g][K,N] = A[g][M,K]^T * B[g][M,N]
template <typename T, bool Acc = false>
void bmm_tn(const T* a, const T* b, T* c, int groups, int m, int k, int n) {
    auto row = [=](int g, int kk) {
        const T* ag = a + std::int64_t(g) * m * k;
        const T* bg = b + std::int64_t(g) * m * n;
        T* ck = c + std::int64_t(g) * k * n + std::int64_t(kk) * n;
        if (!Acc)
            for (int j = 0; j < n; ++j) ck[j] = T(0);
        for (int i = 0; i < m; ++i) {
            const T aik = ag[std::int64_t(i) * k + kk];
            const T* bi = bg + std::int64_t(i) * n;
            for (int j = 0; j < n; ++j) ck[j] += aik * bi[j];
        }
    };
    if (use_parallel(std::int64_t(groups) * m * k * n)) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int g = 0; g < groups; ++g)
            for (int kk = 0; kk < k; ++kk) row(g, kk);
    } else {
        for (int g = 0; g < groups; ++g)
            for (int kk = 0; kk < k; ++kk) row(g, kk);
    }
}

// ------------------------------ elementwise ------------------------------

template <typename T>
void add(const T* a, const T* b, T* out, std::int64_t n) {
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    } else {
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    }
}

template <typename T, bool Acc = false>
void scale(const T* a, T s, T* out, std::int64_t n) {
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i)
            if (Acc)
                out[i] += a[i] * s;
            else
                out[i] = a[i] * s;
    } else {
        for (std::int64_t i = 0; i < n; ++i)
            if (Acc)
                out[i] += a[i] * s;
            else
                out[i] = a[i] * s;
    }
}

template <typename T>
void acc(T* dst, const T* src, std::int64_t n) {
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
    } else {
        for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
}

// out[r,:] = a[r,:] + bias[:]
template <typename T>
void add_bias(const T* a, const T* bias, T* out, int rows, int cols) {
    auto row = [=](int r) {
        const T* ar = a + std::int64_t(r) * cols;
        T* onr = out + std::int64_t(r) * cols;
        for (int j = 0; j < cols; ++j) onr[j] = ar[j] + bias[j];
    };
    if (use_parallel(std::int64_t(rows) * cols)) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) row(r);
    } else {
        for (int r = 0; r < rows; ++r) row(r);
    }
}

// dbias[j] += sum_r dout[r,j]
template <typename T>
void bias_backward(const T* dout, T* dbias, int rows, int cols) {
    auto col = [=](int j) {
        T acc = T(0);
        for (int r = 0; r < rows; ++r) acc += dout[std::int64_t(r) * cols + j];
        dbias[j] += acc;
    };
    if (use_parallel(std::int64_t(rows) * cols)) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < cols; ++j) col(j);
    } else {
        for (int j = 0; j < cols; ++j) col(j);
    }
}

template <typename T>
void relu(const T* a, T* out, std::int64_t n) {
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    } else {
        for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    }
}

template <typename T>
void relu_backward(const T* a, const T* dout, T* da, std::int64_t n) {
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) da[i] += a[i] > T(0) ? dout[i] : T(0);
    } else {
        for (std::int64_t i = 0; i < n; ++i) da[i] += a[i] > T(0) ? dout[i] : T(0);
    }
}

// --------------------------- attention softmax ---------------------------

// Row-wise softmax over the last axis of scores [B,H,Tq,Tk], restricted to
// positions where mask[b,tq,tk] > 0. Entries outside the mask get probability
// zero; a row with no admissible position comes out all-zero instead of NaN.
template <typename T>
void attn_softmax(const T* scores, const T* mask, T* probs, int b, int h, int tq, int tk) {
    const std::int64_t rows = std::int64_t(b) * h * tq;
    auto row = [=](std::int64_t r) {
        const std::int64_t bi = r / (std::int64_t(h) * tq);
        const std::int64_t qi = r % tq;
        const T* s = scores + r * tk;
        const T* mk = mask + (bi * tq + qi) * tk;
        T* p = probs + r * tk;
        T mx = T(0);
        bool any = false;
        for (int j = 0; j < tk; ++j)
            if (mk[j] > T(0) && (!any || s[j] > mx)) {
                mx = s[j];
                any = true;
            }
        if (!any) {
            for (int j = 0; j < tk; ++j) p[j] = T(0);
            return;
        }
        T z = T(0);
        for (int j = 0; j < tk; ++j) {
            p[j] = mk[j] > T(0) ? std::exp(s[j] - mx) : T(0);
            z += p[j];
        }
        const T inv = T(1) / z;
        for (int j = 0; j < tk; ++j) p[j] *= inv;
    };
    if (use_parallel(std::int64_t(rows) * tk)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// dscores[r,:] += p ⊙ (dp − <p, dp>); zero rows stay zero.
template <typename T>
void softmax_backward(const T* probs, const T* dprobs, T* dscores, std::int64_t rows, int cols) {
    auto row = [=](std::int64_t r) {
        const T* p = probs + r * cols;
        const T* dp = dprobs + r * cols;
        T* ds = dscores + r * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += p[j] * dp[j];
        for (int j = 0; j < cols; ++j) ds[j] += p[j] * (dp[j] - dot);
    };
    if (use_parallel(rows * cols)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// ------------------------------- layernorm -------------------------------

template <typename T>
void layernorm(const T* x, const T* gain, const T* bias, T* out, T* rstd_cache, T* mean_cache,
               std::int64_t rows, int cols, T eps) {
    auto row = [=](std::int64_t r) {
        const T* xr = x + r * cols;
        T* yr = out + r * cols;
        T mean = T(0);
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= T(cols);
        T var = T(0);
        for (int j = 0; j < cols; ++j) {
            const T d = xr[j] - mean;
            var += d * d;
        }
        var /= T(cols);
        const T rstd = T(1) / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * rstd * gain[j] + bias[j];
        rstd_cache[r] = rstd;
        mean_cache[r] = mean;
    };
    if (use_parallel(rows * cols)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

template <typename T>
void layernorm_backward_x(const T* x, const T* gain, const T* dout, const T* rstd_cache,
                          const T* mean_cache, T* dx, std::int64_t rows, int cols) {
    auto row = [=](std::int64_t r) {
        const T* xr = x + r * cols;
        const T* dy = dout + r * cols;
        T* dxr = dx + r * cols;
        const T rstd = rstd_cache[r];
        const T mean = mean_cache[r];
        T sum_g = T(0), sum_gx = T(0);
        for (int j = 0; j < cols; ++j) {
            const T g = dy[j] * gain[j];
            sum_g += g;
            sum_gx += g * (xr[j] - mean) * rstd;
        }
        const T inv_n = T(1) / T(cols);
        for (int j = 0; j < cols; ++j) {
            const T xhat = (xr[j] - mean) * rstd;
            const T g = dy[j] * gain[j];
            dxr[j] += (g - inv_n * sum_g - xhat * inv_n * sum_gx) * rstd;
        }
    };
    if (use_parallel(rows * cols)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

template <typename T>
void layernorm_backward_params(const T* x, const T* dout, const T* rstd_cache, const T* mean_cache,
                               T* dgain, T* dbias, std::int64_t rows, int cols) {
    auto col = [=](int j) {
        T dg = T(0), db = T(0);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T xhat = (x[r * cols + j] - mean_cache[r]) * rstd_cache[r];
            dg += dout[r * cols + j] * xhat;
            db += dout[r * cols + j];
        }
        dgain[j] += dg;
        dbias[j] += db;
    };
    if (use_parallel(std::int64_t(rows) * cols)) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < cols; ++j) col(j);
    } else {
        for (int j = 0; j < cols; ++j) col(j);
    }
}

// ------------------------------- embedding -------------------------------

// out[r,:] = table[ids[r],:] * scale
template <typename T>
void embed_gather(const T* table, const int* ids, T* out, std::int64_t rows, int dim, T scale) {
    auto row = [=](std::int64_t r) {
        const T* src = table + std::int64_t(ids[r]) * dim;
        T* dst = out + r * dim;
        for (int j = 0; j < dim; ++j) dst[j] = src[j] * scale;
    };
    if (use_parallel(rows * dim)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// Scatter-add runs serially in both backends: rows may share a table entry,
// and a fixed accumulation order keeps gradients reproducible.
template <typename T>
void embed_scatter(const T* dout, const int* ids, T* dtable, std::int64_t rows, int dim, T scale) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = dout + r * dim;
        T* dst = dtable + std::int64_t(ids[r]) * dim;
        for (int j = 0; j < dim; ++j) dst[j] += src[j] * scale;
    }
}

// ------------------------- 0213 transpose (heads) -------------------------

// [B,S,H,D] -> [B,H,S,D]
template <typename T>
void transpose_0213(const T* in, T* out, int b, int s, int h, int d) {
    const std::int64_t rows = std::int64_t(b) * s * h;
    auto row = [=](std::int64_t r) {
        const std::int64_t bi = r / (std::int64_t(s) * h);
        const std::int64_t rem = r % (std::int64_t(s) * h);
        const std::int64_t si = rem / h;
        const std::int64_t hi = rem % h;
        const T* src = in + (r)*d;
        T* dst = out + ((bi * h + hi) * s + si) * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    };
    if (use_parallel(rows * d)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// accumulate [B,H,S,D] gradient back into [B,S,H,D]
template <typename T>
void transpose_0213_backward(const T* dout, T* din, int b, int s, int h, int d) {
    const std::int64_t rows = std::int64_t(b) * s * h;
    auto row = [=](std::int64_t r) {
        const std::int64_t bi = r / (std::int64_t(s) * h);
        const std::int64_t rem = r % (std::int64_t(s) * h);
        const std::int64_t si = rem / h;
        const std::int64_t hi = rem % h;
        const T* src = dout + ((bi * h + hi) * s + si) * d;
        T* dst = din + r * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    };
    if (use_parallel(rows * d)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// ------------------------------ cross entropy ------------------------------

// Label-smoothed token cross entropy, mean over rows with weight > 0.
// probs (softmax of logits) are cached for the backward pass. Row losses are
// reduced serially so the total does not depend on thread count.
template <typename T>
T cross_entropy_forward(const T* logits, const int* targets, const T* weights, T smoothing,
                        T* probs, T* row_loss, std::int64_t rows, int vocab) {
    auto row = [=](std::int64_t r) {
        const T* lr = logits + r * vocab;
        T* pr = probs + r * vocab;
        T mx = lr[0];
        for (int v = 1; v < vocab; ++v) mx = std::max(mx, lr[v]);
        T z = T(0);
        for (int v = 0; v < vocab; ++v) {
            pr[v] = std::exp(lr[v] - mx);
            z += pr[v];
        }
        const T inv = T(1) / z;
        const T logz = std::log(z) + mx;
        T mean_logp = T(0);
        for (int v = 0; v < vocab; ++v) {
            mean_logp += lr[v];
            pr[v] *= inv;
        }
        mean_logp = mean_logp / T(vocab) - logz;
        const T logp_t = lr[targets[r]] - logz;
        row_loss[r] = -(T(1) - smoothing) * logp_t - smoothing * mean_logp;
    };
    if (use_parallel(rows * vocab)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
    T total = T(0), wsum = T(0);
    for (std::int64_t r = 0; r < rows; ++r) {
        total += weights[r] * row_loss[r];
        wsum += weights[r];
    }
    return wsum > T(0) ? total / wsum : T(0);
}

template <typename T>
void cross_entropy_backward(const T* probs, const int* targets, const T* weights, T smoothing,
                            T dloss, T* dlogits, std::int64_t rows, int vocab) {
    T wsum = T(0);
    for (std::int64_t r = 0; r < rows; ++r) wsum += weights[r];
    if (wsum <= T(0)) return;
    const T unif = smoothing / T(vocab);
    auto row = [=](std::int64_t r) {
        if (weights[r] <= T(0)) return;
        const T w = dloss * weights[r] / wsum;
        const T* pr = probs + r * vocab;
        T* dl = dlogits + r * vocab;
        for (int v = 0; v < vocab; ++v) dl[v] += w * (pr[v] - unif);
        dl[targets[r]] -= w * (T(1) - smoothing);
    };
    if (use_parallel(rows * vocab)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    } else {
        for (std::int64_t r = 0; r < rows; ++r) row(r);
    }
}

// --------------------------------- adam ---------------------------------

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, std::int64_t n, T lr, T beta1, T beta2,
                 T eps, int step) {
    const T bc1 = T(1) - std::pow(beta1, T(step));
    const T bc2 = T(1) - std::pow(beta2, T(step));
    auto upd = [=](std::int64_t i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * grad[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * grad[i] * grad[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    };
    if (use_parallel(n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) upd(i);
    } else {
        for (std::int64_t i = 0; i < n; ++i) upd(i);
    }
}

}  // namespace zsnmt::kernels

#endif
