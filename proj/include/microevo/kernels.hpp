#pragma once

// Hot inner loops, each in a serial reference version and an OpenMP version.
// Every output element is computed independently with a fixed accumulation
// order, so the two versions (and any thread count) are bit-identical; tests
// assert that and tools/bench_kernels compares their throughput.

#include <cstddef>

namespace microevo::kernels {

bool parallel_enabled();
void set_parallel(bool on);

// --- periodic 5-point stencil -------------------------------------------

// y = (left + right + up + down - 4*center) * inv_h2, periodic wrap.
void laplacian_serial(const float* x, float* y, int h, int w, float inv_h2);
void laplacian_omp(const float* x, float* y, int h, int w, float inv_h2);
void laplacian(const float* x, float* y, int h, int w, float inv_h2);

// Fused Gray-Scott forward-Euler update of both species.
void gs_step_serial(const float* u, const float* v, float* u_out, float* v_out,
                    int h, int w, float inv_h2, float du, float dv, float feed,
                    float kill, float dt);
void gs_step_omp(const float* u, const float* v, float* u_out, float* v_out,
                 int h, int w, float inv_h2, float du, float dv, float feed,
                 float kill, float dt);
void gs_step(const float* u, const float* v, float* u_out, float* v_out,
             int h, int w, float inv_h2, float du, float dv, float feed,
             float kill, float dt);

// --- 2D cross-correlation ------------------------------------------------
// x: (N, C_in, H, W), w: (C_out, C_in, KH, KW), y: (N, C_out, OH, OW)
// OH = (H + 2*pad - ((KH-1)*dilation + 1))/stride + 1. bias may be null.

template <typename T>
void conv2d_forward_serial(const T* x, const T* w, const T* bias, T* y, int n,
                           int c_in, int h, int wd, int c_out, int kh, int kw,
                           int stride, int pad, int dilation = 1);
template <typename T>
void conv2d_forward_omp(const T* x, const T* w, const T* bias, T* y, int n,
                        int c_in, int h, int wd, int c_out, int kh, int kw,
                        int stride, int pad, int dilation = 1);
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, int n,
                    int c_in, int h, int wd, int c_out, int kh, int kw,
                    int stride, int pad, int dilation = 1);

// Gradients of the above. dx/dw accumulate into zero-initialized buffers.
template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, int n, int c_in,
                           int h, int wd, int c_out, int kh, int kw, int stride,
                           int pad, int dilation = 1);
template <typename T>
void conv2d_backward_weights(const T* x, const T* dy, T* dw, T* dbias, int n,
                             int c_in, int h, int wd, int c_out, int kh, int kw,
                             int stride, int pad, int dilation = 1);

}  // namespace microevo::kernels
