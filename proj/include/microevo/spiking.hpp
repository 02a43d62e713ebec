#pragma once

#include "microevo/layers.hpp"
#include "microevo/tensor.hpp"

namespace microevo::nn {

template <typename T>
struct LifParams {
    T decay = T(0.5);
    T u_th = T(1);
    T surrogate_width = T(1);
};

// Rectangular surrogate: d(spike)/du as a function of u - u_th.
template <typename T>
T surrogate_spike_grad(T u_minus_th, const LifParams<T>& p) {
    return std::abs(u_minus_th) <= p.surrogate_width / T(2) ? T(1) / p.surrogate_width
                                                            : T(0);
}

template <typename T>
void check_binary_spikes(const Tensor<T>& o) {
    for (T v : o.data())
        if (v != T(0) && v != T(1))
            throw std::invalid_argument("lif_step: previous spikes are not binary");
}

template <typename T>
struct LifState {
    Tensor<T> u;  // membrane potential
    Tensor<T> o;  // binary spike output

    static LifState zeros(std::vector<int> shape) {
        LifState s;
        s.u = Tensor<T>::zeros(shape);
        s.o = Tensor<T>::zeros(shape);
        return s;
    }
};

// u_t = decay * u_{t-1} * (1 - o_{t-1}) + I_t   (hard reset)
// o_t = step(u_t - u_th)                          (rectangular surrogate in backward)
template <typename T>
LifState<T> lif_step(const LifState<T>& prev, const Tensor<T>& input,
                     const LifParams<T>& p) {
    check_binary_spikes(prev.o);
    LifState<T> next;
    next.u = add(scale(mul(prev.u, one_minus(prev.o)), p.decay), input);
    next.o = spike(next.u, p.u_th, p.surrogate_width);
    return next;
}

// Per-channel gates of an STC-LIF neuron layer plus its 3x3 spatial
// self-connection over the previous spike map (bias-free).
template <typename T>
struct StcGates {
    Tensor<T> a;    // (C) gate weight on u_{t-1}
    Tensor<T> c;    // (C) gate weight on o_{t-1}
    Tensor<T> b;    // (C) gate bias
    Tensor<T> w_s;  // (C, C, 3, 3) spatial self-connection

    static StcGates create(int channels, std::mt19937_64& rng) {
        StcGates g;
        g.a = Tensor<T>::zeros({channels}, true);
        g.c = Tensor<T>::zeros({channels}, true);
        g.b = Tensor<T>::zeros({channels}, true);
        g.w_s = init_weight<T>({channels, channels, 3, 3}, channels * 9, channels * 9, rng);
        return g;
    }

    // All-zero gates and spatial weights make the step reduce exactly to LIF.
    static StcGates zeros(int channels) {
        StcGates g;
        g.a = Tensor<T>::zeros({channels}, true);
        g.c = Tensor<T>::zeros({channels}, true);
        g.b = Tensor<T>::zeros({channels}, true);
        g.w_s = Tensor<T>::zeros({channels, channels, 3, 3}, true);
        return g;
    }
};

// Temporal self-gate g_t = 2*sigmoid(a.u_{t-1} + c.o_{t-1} + b) scales the
// membrane decay path; the spatial self-connection adds conv3x3(o_{t-1}).
// With a=c=b=0 the gate is exactly 1 and with w_s=0 the spatial term is 0,
// so the update is bitwise identical to lif_step.
template <typename T>
LifState<T> stc_lif_step(const LifState<T>& prev, const Tensor<T>& input,
                         const StcGates<T>& g, const LifParams<T>& p) {
    check_binary_spikes(prev.o);
    Tensor<T> pre = add_channel(add(mul_channel(prev.u, g.a), mul_channel(prev.o, g.c)), g.b);
    Tensor<T> gate = scale(sigmoid(pre), T(2));
    Tensor<T> spatial = conv2d(prev.o, g.w_s, static_cast<const Tensor<T>*>(nullptr), 1, 1);
    LifState<T> next;
    next.u = add(add(scale(mul(mul(gate, prev.u), one_minus(prev.o)), p.decay), input),
                 spatial);
    next.o = spike(next.u, p.u_th, p.surrogate_width);
    return next;
}

}  // namespace microevo::nn
