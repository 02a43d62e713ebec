#pragma once

// 3D (video) cross-correlation and its transpose. Plain loops: these back the
// base ANN encoder/decoder which only ever runs at smoke scale.

#include "microevo/tensor.hpp"

namespace microevo::nn {

namespace detail3d {

// y[n,oc,od,oi,oj] (+)= sum over ic,kd,ki,kj of w * x. When kAccumulate is
// false the output is first filled with bias (or zero).
template <typename T, bool kAccumulate>
void conv3d_raw(const T* x, const T* w, const T* bias, T* y, int n, int c_in,
                int d, int h, int wd, int c_out, int kd, int kh, int kw,
                int stride_d, int stride, int pad_d, int pad) {
    const int od = (d + 2 * pad_d - kd) / stride_d + 1;
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const size_t xvol = static_cast<size_t>(d) * h * wd;
    const size_t yvol = static_cast<size_t>(od) * oh * ow;
    for (int b = 0; b < n; ++b) {
        for (int oc = 0; oc < c_out; ++oc) {
            T* yp = y + (static_cast<size_t>(b) * c_out + oc) * yvol;
            if (!kAccumulate) {
                const T bv = bias ? bias[oc] : T(0);
                for (size_t i = 0; i < yvol; ++i) yp[i] = bv;
            }
            for (int ic = 0; ic < c_in; ++ic) {
                const T* xp = x + (static_cast<size_t>(b) * c_in + ic) * xvol;
                const T* wk = w + ((static_cast<size_t>(oc) * c_in + ic) * kd) * kh * kw;
                for (int zd = 0; zd < od; ++zd)
                    for (int zi = 0; zi < oh; ++zi)
                        for (int zj = 0; zj < ow; ++zj) {
                            T acc = T(0);
                            for (int fd = 0; fd < kd; ++fd) {
                                const int id = zd * stride_d - pad_d + fd;
                                if (id < 0 || id >= d) continue;
                                for (int fi = 0; fi < kh; ++fi) {
                                    const int ii = zi * stride - pad + fi;
                                    if (ii < 0 || ii >= h) continue;
                                    for (int fj = 0; fj < kw; ++fj) {
                                        const int ij = zj * stride - pad + fj;
                                        if (ij < 0 || ij >= wd) continue;
                                        acc += wk[(static_cast<size_t>(fd) * kh + fi) * kw + fj] *
                                               xp[(static_cast<size_t>(id) * h + ii) * wd + ij];
                                    }
                                }
                            }
                            yp[(static_cast<size_t>(zd) * oh + zi) * ow + zj] += acc;
                        }
            }
        }
    }
}

// dx += adjoint scatter of dy through w; conv geometry as above.
template <typename T>
void conv3d_backward_input_raw(const T* dy, const T* w, T* dx, int n, int c_in,
                               int d, int h, int wd, int c_out, int kd, int kh,
                               int kw, int stride_d, int stride, int pad_d,
                               int pad) {
    const int od = (d + 2 * pad_d - kd) / stride_d + 1;
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const size_t xvol = static_cast<size_t>(d) * h * wd;
    const size_t yvol = static_cast<size_t>(od) * oh * ow;
    for (int b = 0; b < n; ++b)
        for (int oc = 0; oc < c_out; ++oc) {
            const T* dyp = dy + (static_cast<size_t>(b) * c_out + oc) * yvol;
            for (int ic = 0; ic < c_in; ++ic) {
                T* dxp = dx + (static_cast<size_t>(b) * c_in + ic) * xvol;
                const T* wk = w + ((static_cast<size_t>(oc) * c_in + ic) * kd) * kh * kw;
                for (int zd = 0; zd < od; ++zd)
                    for (int zi = 0; zi < oh; ++zi)
                        for (int zj = 0; zj < ow; ++zj) {
                            const T g = dyp[(static_cast<size_t>(zd) * oh + zi) * ow + zj];
                            if (g == T(0)) continue;
                            for (int fd = 0; fd < kd; ++fd) {
                                const int id = zd * stride_d - pad_d + fd;
                                if (id < 0 || id >= d) continue;
                                for (int fi = 0; fi < kh; ++fi) {
                                    const int ii = zi * stride - pad + fi;
                                    if (ii < 0 || ii >= h) continue;
                                    for (int fj = 0; fj < kw; ++fj) {
                                        const int ij = zj * stride - pad + fj;
                                        if (ij < 0 || ij >= wd) continue;
                                        dxp[(static_cast<size_t>(id) * h + ii) * wd + ij] +=
                                            g * wk[(static_cast<size_t>(fd) * kh + fi) * kw + fj];
                                    }
                                }
                            }
                        }
            }
        }
}

template <typename T>
void conv3d_backward_weights_raw(const T* x, const T* dy, T* dw, T* dbias,
                                 int n, int c_in, int d, int h, int wd,
                                 int c_out, int kd, int kh, int kw,
                                 int stride_d, int stride, int pad_d, int pad) {
    const int od = (d + 2 * pad_d - kd) / stride_d + 1;
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const size_t xvol = static_cast<size_t>(d) * h * wd;
    const size_t yvol = static_cast<size_t>(od) * oh * ow;
    for (int b = 0; b < n; ++b)
        for (int oc = 0; oc < c_out; ++oc) {
            const T* dyp = dy + (static_cast<size_t>(b) * c_out + oc) * yvol;
            if (dbias)
                for (size_t i = 0; i < yvol; ++i) dbias[oc] += dyp[i];
            for (int ic = 0; ic < c_in; ++ic) {
                const T* xp = x + (static_cast<size_t>(b) * c_in + ic) * xvol;
                T* wk = dw + ((static_cast<size_t>(oc) * c_in + ic) * kd) * kh * kw;
                for (int zd = 0; zd < od; ++zd)
                    for (int zi = 0; zi < oh; ++zi)
                        for (int zj = 0; zj < ow; ++zj) {
                            const T g = dyp[(static_cast<size_t>(zd) * oh + zi) * ow + zj];
                            if (g == T(0)) continue;
                            for (int fd = 0; fd < kd; ++fd) {
                                const int id = zd * stride_d - pad_d + fd;
                                if (id < 0 || id >= d) continue;
                                for (int fi = 0; fi < kh; ++fi) {
                                    const int ii = zi * stride - pad + fi;
                                    if (ii < 0 || ii >= h) continue;
                                    for (int fj = 0; fj < kw; ++fj) {
                                        const int ij = zj * stride - pad + fj;
                                        if (ij < 0 || ij >= wd) continue;
                                        wk[(static_cast<size_t>(fd) * kh + fi) * kw + fj] +=
                                            g * xp[(static_cast<size_t>(id) * h + ii) * wd + ij];
                                    }
                                }
                            }
                        }
            }
        }
}

}  // namespace detail3d

// x: (N, C_in, D, H, W), w: (C_out, C_in, KD, KH, KW), bias (C_out) optional.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 int stride_d, int stride, int pad_d, int pad) {
    if (x.shape().size() != 5 || w.shape().size() != 5 || x.shape()[1] != w.shape()[1])
        throw std::invalid_argument("conv3d: shape mismatch");
    const int N = x.shape()[0], C_in = x.shape()[1], D = x.shape()[2],
              H = x.shape()[3], W = x.shape()[4];
    const int C_out = w.shape()[0], KD = w.shape()[2], KH = w.shape()[3], KW = w.shape()[4];
    if (D + 2 * pad_d < KD || H + 2 * pad < KH || W + 2 * pad < KW)
        throw std::invalid_argument("conv3d: input smaller than kernel");
    const int OD = (D + 2 * pad_d - KD) / stride_d + 1;
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;

    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = detail::make_result<T>({N, C_out, OD, OH, OW}, std::move(parents));
    detail3d::conv3d_raw<T, false>(x.data().data(), w.data().data(),
                                   bias ? bias->data().data() : nullptr,
                                   n->data.data(), N, C_in, D, H, W, C_out, KD,
                                   KH, KW, stride_d, stride, pad_d, pad);
    const bool has_bias = bias != nullptr;
    if (n->requires_grad)
        n->backprop = [=](Node<T>& self) {
            auto& x = self.parents[0];
            auto& w = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                detail3d::conv3d_backward_input_raw(self.grad.data(), w->data.data(),
                                                    x->grad.data(), N, C_in, D, H, W,
                                                    C_out, KD, KH, KW, stride_d,
                                                    stride, pad_d, pad);
            }
            if (w->requires_grad) {
                w->ensure_grad();
                T* db = nullptr;
                if (has_bias && self.parents[2]->requires_grad) {
                    self.parents[2]->ensure_grad();
                    db = self.parents[2]->grad.data();
                }
                detail3d::conv3d_backward_weights_raw(
                    x->data.data(), self.grad.data(), w->grad.data(), db, N,
                    C_in, D, H, W, C_out, KD, KH, KW, stride_d, stride, pad_d, pad);
            }
        };
    return Tensor<T>(n);
}

// Transposed 3D conv. x: (N, C_in, D, H, W), w: (C_in, C_out, KD, KH, KW).
template <typename T>
Tensor<T> deconv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                   int stride_d, int stride, int pad_d, int pad, int outpad_d,
                   int outpad) {
    if (x.shape().size() != 5 || w.shape().size() != 5 || x.shape()[1] != w.shape()[0])
        throw std::invalid_argument("deconv3d: shape mismatch");
    if (outpad < 0 || outpad >= stride || outpad_d < 0 || outpad_d >= stride_d)
        throw std::invalid_argument("deconv3d: need 0 <= output_pad < stride");
    const int N = x.shape()[0], C_in = x.shape()[1], D = x.shape()[2],
              H = x.shape()[3], W = x.shape()[4];
    const int C_out = w.shape()[1], KD = w.shape()[2], KH = w.shape()[3], KW = w.shape()[4];
    const int OD = (D - 1) * stride_d - 2 * pad_d + KD + outpad_d;
    const int OH = (H - 1) * stride - 2 * pad + KH + outpad;
    const int OW = (W - 1) * stride - 2 * pad + KW + outpad;
    if (OD < 1 || OH < 1 || OW < 1)
        throw std::invalid_argument("deconv3d: empty output");

    std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = detail::make_result<T>({N, C_out, OD, OH, OW}, std::move(parents));
    detail3d::conv3d_backward_input_raw(x.data().data(), w.data().data(),
                                        n->data.data(), N, C_out, OD, OH, OW,
                                        C_in, KD, KH, KW, stride_d, stride,
                                        pad_d, pad);
    if (bias) {
        const size_t vol = static_cast<size_t>(OD) * OH * OW;
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C_out; ++c) {
                T* p = n->data.data() + (static_cast<size_t>(b) * C_out + c) * vol;
                for (size_t i = 0; i < vol; ++i) p[i] += bias->data()[c];
            }
    }
    const bool has_bias = bias != nullptr;
    if (n->requires_grad)
        n->backprop = [=](Node<T>& self) {
            auto& x = self.parents[0];
            auto& w = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                detail3d::conv3d_raw<T, true>(self.grad.data(), w->data.data(),
                                              static_cast<const T*>(nullptr),
                                              x->grad.data(), N, C_out, OD, OH,
                                              OW, C_in, KD, KH, KW, stride_d,
                                              stride, pad_d, pad);
            }
            if (w->requires_grad) {
                w->ensure_grad();
                detail3d::conv3d_backward_weights_raw(
                    self.grad.data(), x->data.data(), w->grad.data(),
                    static_cast<T*>(nullptr), N, C_out, OD, OH, OW, C_in, KD,
                    KH, KW, stride_d, stride, pad_d, pad);
            }
            if (has_bias && self.parents[2]->requires_grad) {
                auto& bias = self.parents[2];
                bias->ensure_grad();
                const size_t vol = static_cast<size_t>(OD) * OH * OW;
                for (int b = 0; b < N; ++b)
                    for (int c = 0; c < C_out; ++c) {
                        const T* g = self.grad.data() +
                                     (static_cast<size_t>(b) * C_out + c) * vol;
                        T acc = T(0);
                        for (size_t i = 0; i < vol; ++i) acc += g[i];
                        bias->grad[c] += acc;
                    }
            }
        };
    return Tensor<T>(n);
}

}  // namespace microevo::nn
