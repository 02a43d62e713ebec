#pragma once

#include <random>
#include <string>
#include <vector>

#include "microevo/tensor.hpp"

namespace microevo::nn {

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, seeded.
template <typename T>
Tensor<T> init_weight(std::vector<int> shape, int fan_in, int fan_out,
                      std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto t = Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
struct Dense {
    Tensor<T> w;  // (out, in)
    Tensor<T> b;  // (out)

    static Dense create(int in, int out, std::mt19937_64& rng) {
        Dense d;
        d.w = init_weight<T>({out, in}, in, out, rng);
        d.b = Tensor<T>::zeros({out}, true);
        return d;
    }
    Tensor<T> forward(const Tensor<T>& x) const { return matmul_dense(x, w, &b); }
};

// y = W*x + b; activation applied by the caller.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Dense<T>& p) {
    return p.forward(x);
}

template <typename T>
struct Conv2dLayer {
    Tensor<T> w;  // (C_out, C_in, K, K)
    Tensor<T> b;  // (C_out)
    int stride = 1;
    int pad = 0;
    int dilation = 1;

    static Conv2dLayer create(int c_in, int c_out, int k, int stride, int pad,
                              std::mt19937_64& rng) {
        Conv2dLayer l;
        l.w = init_weight<T>({c_out, c_in, k, k}, c_in * k * k, c_out * k * k, rng);
        l.b = Tensor<T>::zeros({c_out}, true);
        l.stride = stride;
        l.pad = pad;
        return l;
    }
    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, w, &b, stride, pad, dilation);
    }
};

template <typename T>
struct Deconv2dLayer {
    Tensor<T> w;  // (C_in, C_out, K, K)
    Tensor<T> b;  // (C_out)
    int stride = 1;
    int pad = 0;
    int output_pad = 0;
    int dilation = 1;

    static Deconv2dLayer create(int c_in, int c_out, int k, int stride, int pad,
                                int output_pad, std::mt19937_64& rng) {
        Deconv2dLayer l;
        l.w = init_weight<T>({c_in, c_out, k, k}, c_in * k * k, c_out * k * k, rng);
        l.b = Tensor<T>::zeros({c_out}, true);
        l.stride = stride;
        l.pad = pad;
        l.output_pad = output_pad;
        return l;
    }
    Tensor<T> forward(const Tensor<T>& x) const {
        return deconv2d(x, w, &b, stride, pad, output_pad, dilation);
    }
};

template <typename T>
struct Conv3dLayer {
    Tensor<T> w;  // (C_out, C_in, KD, K, K)
    Tensor<T> b;
    int stride_d = 1, stride = 1, pad_d = 0, pad = 0;

    static Conv3dLayer create(int c_in, int c_out, int kd, int k, int stride_d,
                              int stride, int pad_d, int pad, std::mt19937_64& rng) {
        Conv3dLayer l;
        l.w = init_weight<T>({c_out, c_in, kd, k, k}, c_in * kd * k * k,
                             c_out * kd * k * k, rng);
        l.b = Tensor<T>::zeros({c_out}, true);
        l.stride_d = stride_d;
        l.stride = stride;
        l.pad_d = pad_d;
        l.pad = pad;
        return l;
    }
    Tensor<T> forward(const Tensor<T>& x) const {
        return conv3d(x, w, &b, stride_d, stride, pad_d, pad);
    }
};

template <typename T>
struct Deconv3dLayer {
    Tensor<T> w;  // (C_in, C_out, KD, K, K)
    Tensor<T> b;
    int stride_d = 1, stride = 1, pad_d = 0, pad = 0, outpad_d = 0, outpad = 0;

    static Deconv3dLayer create(int c_in, int c_out, int kd, int k, int stride_d,
                                int stride, int pad_d, int pad, int outpad_d,
                                int outpad, std::mt19937_64& rng) {
        Deconv3dLayer l;
        l.w = init_weight<T>({c_in, c_out, kd, k, k}, c_in * kd * k * k,
                             c_out * kd * k * k, rng);
        l.b = Tensor<T>::zeros({c_out}, true);
        l.stride_d = stride_d;
        l.stride = stride;
        l.pad_d = pad_d;
        l.pad = pad;
        l.outpad_d = outpad_d;
        l.outpad = outpad;
        return l;
    }
    Tensor<T> forward(const Tensor<T>& x) const {
        return deconv3d(x, w, &b, stride_d, stride, pad_d, pad, outpad_d, outpad);
    }
};

// --- recurrent cells ---------------------------------------------------------

template <typename T>
struct RnnCell {
    Tensor<T> w_x;  // (H, in)
    Tensor<T> w_h;  // (H, H)
    Tensor<T> b;    // (H)

    static RnnCell create(int in, int hidden, std::mt19937_64& rng) {
        RnnCell c;
        c.w_x = init_weight<T>({hidden, in}, in, hidden, rng);
        c.w_h = init_weight<T>({hidden, hidden}, hidden, hidden, rng);
        c.b = Tensor<T>::zeros({hidden}, true);
        return c;
    }
};

// h_t = tanh(W_xh*x + W_hh*h_prev + b)
template <typename T>
Tensor<T> rnn_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev,
                        const RnnCell<T>& p) {
    return tanh_act(add(matmul_dense(x, p.w_x, &p.b),
                        matmul_dense(h_prev, p.w_h, static_cast<const Tensor<T>*>(nullptr))));
}

// Gate block order everywhere: [f, i, g, o].
template <typename T>
struct LstmCell {
    Tensor<T> w_x;  // (4H, in)
    Tensor<T> w_h;  // (4H, H)
    Tensor<T> b;    // (4H)
    int hidden = 0;

    static LstmCell create(int in, int hidden, std::mt19937_64& rng) {
        LstmCell c;
        c.w_x = init_weight<T>({4 * hidden, in}, in, hidden, rng);
        c.w_h = init_weight<T>({4 * hidden, hidden}, hidden, hidden, rng);
        c.b = Tensor<T>::zeros({4 * hidden}, true);
        c.hidden = hidden;
        return c;
    }
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell_step(const Tensor<T>& x,
                                               const Tensor<T>& h_prev,
                                               const Tensor<T>& c_prev,
                                               const LstmCell<T>& p) {
    const int H = p.hidden;
    Tensor<T> z = add(matmul_dense(x, p.w_x, &p.b),
                      matmul_dense(h_prev, p.w_h, static_cast<const Tensor<T>*>(nullptr)));
    Tensor<T> f = sigmoid(narrow(z, 1, 0 * H, H));
    Tensor<T> i = sigmoid(narrow(z, 1, 1 * H, H));
    Tensor<T> g = tanh_act(narrow(z, 1, 2 * H, H));
    Tensor<T> o = sigmoid(narrow(z, 1, 3 * H, H));
    Tensor<T> c_t = add(mul(f, c_prev), mul(i, g));
    Tensor<T> h_t = mul(o, tanh_act(c_t));
    return {h_t, c_t};
}

// LSTM gate equations with convolutions in place of the matrix products.
template <typename T>
struct ConvLstmCell {
    Tensor<T> w_x;  // (4C_h, C_in, K, K)
    Tensor<T> w_h;  // (4C_h, C_h, K, K)
    Tensor<T> b;    // (4C_h)
    int hidden_ch = 0;
    int pad = 0;

    static ConvLstmCell create(int c_in, int c_hidden, int k, std::mt19937_64& rng) {
        ConvLstmCell c;
        c.w_x = init_weight<T>({4 * c_hidden, c_in, k, k}, c_in * k * k,
                               c_hidden * k * k, rng);
        c.w_h = init_weight<T>({4 * c_hidden, c_hidden, k, k}, c_hidden * k * k,
                               c_hidden * k * k, rng);
        c.b = Tensor<T>::zeros({4 * c_hidden}, true);
        c.hidden_ch = c_hidden;
        c.pad = k / 2;
        return c;
    }
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv_lstm_cell_step(const Tensor<T>& x,
                                                    const Tensor<T>& h_prev,
                                                    const Tensor<T>& c_prev,
                                                    const ConvLstmCell<T>& p) {
    const int C = p.hidden_ch;
    Tensor<T> z = add(conv2d(x, p.w_x, &p.b, 1, p.pad),
                      conv2d(h_prev, p.w_h, static_cast<const Tensor<T>*>(nullptr), 1, p.pad));
    Tensor<T> f = sigmoid(narrow(z, 1, 0 * C, C));
    Tensor<T> i = sigmoid(narrow(z, 1, 1 * C, C));
    Tensor<T> g = tanh_act(narrow(z, 1, 2 * C, C));
    Tensor<T> o = sigmoid(narrow(z, 1, 3 * C, C));
    Tensor<T> c_t = add(mul(f, c_prev), mul(i, g));
    Tensor<T> h_t = mul(o, tanh_act(c_t));
    return {h_t, c_t};
}

// --- optimizer ----------------------------------------------------------------

template <typename T>
struct AdamState {
    T lr = T(0.001);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    long step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    void init(const std::vector<Tensor<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.numel(), T(0));
            v.emplace_back(p.numel(), T(0));
        }
        step = 0;
    }

    // Standard bias-corrected Adam; consumes and zeroes the gradients.
    void update(std::vector<Tensor<T>>& params) {
        if (m.size() != params.size())
            throw std::invalid_argument("AdamState: not initialized for these parameters");
        ++step;
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step));
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step));
        for (size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            auto& g = p.grad();
            for (size_t i = 0; i < g.size(); ++i) {
                m[k][i] = beta1 * m[k][i] + (T(1) - beta1) * g[i];
                v[k][i] = beta2 * v[k][i] + (T(1) - beta2) * g[i] * g[i];
                const T mhat = m[k][i] / bc1;
                const T vhat = v[k][i] / bc2;
                p.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            p.zero_grad();
        }
    }
};

}  // namespace microevo::nn
