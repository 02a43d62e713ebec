#include "microevo/kernels.hpp"

#include <atomic>

namespace microevo::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

// --- periodic stencil ------------------------------------------------------

namespace {

inline void laplacian_row(const float* x, float* y, int i, int h, int w,
                          float inv_h2) {
    const float* row = x + static_cast<size_t>(i) * w;
    const float* up = x + static_cast<size_t>(i == 0 ? h - 1 : i - 1) * w;
    const float* dn = x + static_cast<size_t>(i == h - 1 ? 0 : i + 1) * w;
    float* out = y + static_cast<size_t>(i) * w;
    for (int j = 0; j < w; ++j) {
        const float l = row[j == 0 ? w - 1 : j - 1];
        const float r = row[j == w - 1 ? 0 : j + 1];
        out[j] = (l + r + up[j] + dn[j] - 4.0f * row[j]) * inv_h2;
    }
}

inline void gs_row(const float* u, const float* v, float* u_out, float* v_out,
                   int i, int h, int w, float inv_h2, float du, float dv,
                   float feed, float kill, float dt) {
    const size_t off = static_cast<size_t>(i) * w;
    const size_t up = static_cast<size_t>(i == 0 ? h - 1 : i - 1) * w;
    const size_t dn = static_cast<size_t>(i == h - 1 ? 0 : i + 1) * w;
    for (int j = 0; j < w; ++j) {
        const int jl = j == 0 ? w - 1 : j - 1;
        const int jr = j == w - 1 ? 0 : j + 1;
        const float uc = u[off + j];
        const float vc = v[off + j];
        const float lap_u = (u[off + jl] + u[off + jr] + u[up + j] + u[dn + j] - 4.0f * uc) * inv_h2;
        const float lap_v = (v[off + jl] + v[off + jr] + v[up + j] + v[dn + j] - 4.0f * vc) * inv_h2;
        const float uvv = uc * vc * vc;
        u_out[off + j] = uc + dt * (du * lap_u - uvv + feed * (1.0f - uc));
        v_out[off + j] = vc + dt * (dv * lap_v + uvv - (feed + kill) * vc);
    }
}

}  // namespace

void laplacian_serial(const float* x, float* y, int h, int w, float inv_h2) {
    for (int i = 0; i < h; ++i) laplacian_row(x, y, i, h, w, inv_h2);
}

void laplacian_omp(const float* x, float* y, int h, int w, float inv_h2) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) laplacian_row(x, y, i, h, w, inv_h2);
}

void laplacian(const float* x, float* y, int h, int w, float inv_h2) {
    if (parallel_enabled())
        laplacian_omp(x, y, h, w, inv_h2);
    else
        laplacian_serial(x, y, h, w, inv_h2);
}

void gs_step_serial(const float* u, const float* v, float* u_out, float* v_out,
                    int h, int w, float inv_h2, float du, float dv, float feed,
                    float kill, float dt) {
    for (int i = 0; i < h; ++i)
        gs_row(u, v, u_out, v_out, i, h, w, inv_h2, du, dv, feed, kill, dt);
}

void gs_step_omp(const float* u, const float* v, float* u_out, float* v_out,
                 int h, int w, float inv_h2, float du, float dv, float feed,
                 float kill, float dt) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i)
        gs_row(u, v, u_out, v_out, i, h, w, inv_h2, du, dv, feed, kill, dt);
}

void gs_step(const float* u, const float* v, float* u_out, float* v_out, int h,
             int w, float inv_h2, float du, float dv, float feed, float kill,
             float dt) {
    if (parallel_enabled())
        gs_step_omp(u, v, u_out, v_out, h, w, inv_h2, du, dv, feed, kill, dt);
    else
        gs_step_serial(u, v, u_out, v_out, h, w, inv_h2, du, dv, feed, kill, dt);
}

// --- conv2d ----------------------------------------------------------------

namespace {

template <typename T>
inline void conv2d_forward_one(const T* x, const T* w, const T* bias, T* y,
                               int n_idx, int oc, int c_in, int h, int wd,
                               int c_out, int kh, int kw, int stride, int pad,
                               int dil, int oh, int ow) {
    const size_t xplane = static_cast<size_t>(h) * wd;
    const size_t yplane = static_cast<size_t>(oh) * ow;
    const T* xn = x + static_cast<size_t>(n_idx) * c_in * xplane;
    T* yp = y + (static_cast<size_t>(n_idx) * c_out + oc) * yplane;

    const T b = bias ? bias[oc] : T(0);
    for (size_t i = 0; i < yplane; ++i) yp[i] = b;

    for (int ic = 0; ic < c_in; ++ic) {
        const T* xc = xn + static_cast<size_t>(ic) * xplane;
        const T* wk = w + ((static_cast<size_t>(oc) * c_in + ic) * kh) * kw;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T wv = wk[static_cast<size_t>(ki) * kw + kj];
                const int koff = kj * dil;
                for (int oi = 0; oi < oh; ++oi) {
                    const int ii = oi * stride - pad + ki * dil;
                    if (ii < 0 || ii >= h) continue;
                    const T* xrow = xc + static_cast<size_t>(ii) * wd;
                    T* yrow = yp + static_cast<size_t>(oi) * ow;
                    // valid ow range: 0 <= oj*stride - pad + kj*dil < wd
                    int lo = 0;
                    while (lo < ow && lo * stride - pad + koff < 0) ++lo;
                    int hi = ow;
                    while (hi > lo && (hi - 1) * stride - pad + koff >= wd) --hi;
                    const T* xoff = xrow - pad + koff;
                    if (stride == 1) {
                        for (int oj = lo; oj < hi; ++oj) yrow[oj] += wv * xoff[oj];
                    } else {
                        for (int oj = lo; oj < hi; ++oj)
                            yrow[oj] += wv * xrow[oj * stride - pad + koff];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_forward_impl(const T* x, const T* w, const T* bias, T* y, int n,
                         int c_in, int h, int wd, int c_out, int kh, int kw,
                         int stride, int pad, int dil, bool par) {
    const int oh = (h + 2 * pad - ((kh - 1) * dil + 1)) / stride + 1;
    const int ow = (wd + 2 * pad - ((kw - 1) * dil + 1)) / stride + 1;
    const int total = n * c_out;
#pragma omp parallel for schedule(static) if (par)
    for (int t = 0; t < total; ++t)
        conv2d_forward_one(x, w, bias, y, t / c_out, t % c_out, c_in, h, wd,
                           c_out, kh, kw, stride, pad, dil, oh, ow);
}

}  // namespace

template <typename T>
void conv2d_forward_serial(const T* x, const T* w, const T* bias, T* y, int n,
                           int c_in, int h, int wd, int c_out, int kh, int kw,
                           int stride, int pad, int dil) {
    conv2d_forward_impl(x, w, bias, y, n, c_in, h, wd, c_out, kh, kw, stride,
                        pad, dil, false);
}

template <typename T>
void conv2d_forward_omp(const T* x, const T* w, const T* bias, T* y, int n,
                        int c_in, int h, int wd, int c_out, int kh, int kw,
                        int stride, int pad, int dil) {
    conv2d_forward_impl(x, w, bias, y, n, c_in, h, wd, c_out, kh, kw, stride,
                        pad, dil, true);
}

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, int n,
                    int c_in, int h, int wd, int c_out, int kh, int kw,
                    int stride, int pad, int dil) {
    conv2d_forward_impl(x, w, bias, y, n, c_in, h, wd, c_out, kh, kw, stride,
                        pad, dil, parallel_enabled());
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, int n, int c_in,
                           int h, int wd, int c_out, int kh, int kw, int stride,
                           int pad, int dil) {
    const int oh = (h + 2 * pad - ((kh - 1) * dil + 1)) / stride + 1;
    const int ow = (wd + 2 * pad - ((kw - 1) * dil + 1)) / stride + 1;
    const size_t xplane = static_cast<size_t>(h) * wd;
    const size_t yplane = static_cast<size_t>(oh) * ow;
    const int total = n * c_in;
    // Each thread owns one (sample, input-channel) plane; scatter inside it
    // runs in a fixed order, so results do not depend on scheduling.
#pragma omp parallel for schedule(static) if (parallel_enabled())
    for (int t = 0; t < total; ++t) {
        const int n_idx = t / c_in, ic = t % c_in;
        T* dxp = dx + (static_cast<size_t>(n_idx) * c_in + ic) * xplane;
        for (int oc = 0; oc < c_out; ++oc) {
            const T* dyp = dy + (static_cast<size_t>(n_idx) * c_out + oc) * yplane;
            const T* wk = w + ((static_cast<size_t>(oc) * c_in + ic) * kh) * kw;
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    const T wv = wk[static_cast<size_t>(ki) * kw + kj];
                    const int koff = kj * dil;
                    for (int oi = 0; oi < oh; ++oi) {
                        const int ii = oi * stride - pad + ki * dil;
                        if (ii < 0 || ii >= h) continue;
                        T* dxrow = dxp + static_cast<size_t>(ii) * wd;
                        const T* dyrow = dyp + static_cast<size_t>(oi) * ow;
                        int lo = 0;
                        while (lo < ow && lo * stride - pad + koff < 0) ++lo;
                        int hi = ow;
                        while (hi > lo && (hi - 1) * stride - pad + koff >= wd) --hi;
                        if (stride == 1) {
                            T* dxoff = dxrow - pad + koff;
                            for (int oj = lo; oj < hi; ++oj) dxoff[oj] += wv * dyrow[oj];
                        } else {
                            for (int oj = lo; oj < hi; ++oj)
                                dxrow[oj * stride - pad + koff] += wv * dyrow[oj];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const T* x, const T* dy, T* dw, T* dbias, int n,
                             int c_in, int h, int wd, int c_out, int kh, int kw,
                             int stride, int pad, int dil) {
    const int oh = (h + 2 * pad - ((kh - 1) * dil + 1)) / stride + 1;
    const int ow = (wd + 2 * pad - ((kw - 1) * dil + 1)) / stride + 1;
    const size_t xplane = static_cast<size_t>(h) * wd;
    const size_t yplane = static_cast<size_t>(oh) * ow;
    // One thread per output channel; accumulation order over (n, oi, oj)
    // is fixed regardless of thread count.
#pragma omp parallel for schedule(static) if (parallel_enabled())
    for (int oc = 0; oc < c_out; ++oc) {
        for (int n_idx = 0; n_idx < n; ++n_idx) {
            const T* dyp = dy + (static_cast<size_t>(n_idx) * c_out + oc) * yplane;
            if (dbias) {
                T acc = T(0);
                for (size_t i = 0; i < yplane; ++i) acc += dyp[i];
                dbias[oc] += acc;
            }
            for (int ic = 0; ic < c_in; ++ic) {
                const T* xc = x + (static_cast<size_t>(n_idx) * c_in + ic) * xplane;
                T* wk = dw + ((static_cast<size_t>(oc) * c_in + ic) * kh) * kw;
                for (int ki = 0; ki < kh; ++ki) {
                    for (int kj = 0; kj < kw; ++kj) {
                        T acc = T(0);
                        const int koff = kj * dil;
                        for (int oi = 0; oi < oh; ++oi) {
                            const int ii = oi * stride - pad + ki * dil;
                            if (ii < 0 || ii >= h) continue;
                            const T* xrow = xc + static_cast<size_t>(ii) * wd;
                            const T* dyrow = dyp + static_cast<size_t>(oi) * ow;
                            int lo = 0;
                            while (lo < ow && lo * stride - pad + koff < 0) ++lo;
                            int hi = ow;
                            while (hi > lo && (hi - 1) * stride - pad + koff >= wd) --hi;
                            if (stride == 1) {
                                const T* xoff = xrow - pad + koff;
                                for (int oj = lo; oj < hi; ++oj) acc += xoff[oj] * dyrow[oj];
                            } else {
                                for (int oj = lo; oj < hi; ++oj)
                                    acc += xrow[oj * stride - pad + koff] * dyrow[oj];
                            }
                        }
                        wk[static_cast<size_t>(ki) * kw + kj] += acc;
                    }
                }
            }
        }
    }
}

#define MICROEVO_INSTANTIATE_CONV(T)                                          \
    template void conv2d_forward_serial<T>(const T*, const T*, const T*, T*, \
                                           int, int, int, int, int, int, int, \
                                           int, int, int);                     \
    template void conv2d_forward_omp<T>(const T*, const T*, const T*, T*,     \
                                        int, int, int, int, int, int, int,    \
                                        int, int, int);                        \
    template void conv2d_forward<T>(const T*, const T*, const T*, T*, int,    \
                                    int, int, int, int, int, int, int, int,   \
                                    int);                                      \
    template void conv2d_backward_input<T>(const T*, const T*, T*, int, int,  \
                                           int, int, int, int, int, int, int, \
                                           int);                               \
    template void conv2d_backward_weights<T>(const T*, const T*, T*, T*, int, \
                                             int, int, int, int, int, int,    \
                                             int, int, int);

MICROEVO_INSTANTIATE_CONV(float)
MICROEVO_INSTANTIATE_CONV(double)

#undef MICROEVO_INSTANTIATE_CONV

}  // namespace microevo::kernels
