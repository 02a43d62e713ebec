#pragma once

// Central finite-difference gradient checking for the autodiff engine, run in
// double precision. `build` constructs a scalar loss from the given leaf
// tensors; the analytic gradients must match (f(x+h)-f(x-h))/2h elementwise.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "microevo/tensor.hpp"

using DTensor = microevo::nn::Tensor<double>;

inline DTensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    auto t = DTensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

// Returns the maximum relative error over all leaf gradient entries.
inline double fd_max_rel_error(
    std::vector<DTensor>& leaves,
    const std::function<DTensor(std::vector<DTensor>&)>& build, double h = 1e-5) {
    DTensor loss = build(leaves);
    for (auto& l : leaves) l.zero_grad();
    loss = build(leaves);
    loss.backward();

    // Near-zero entries are judged relative to the overall gradient scale, so
    // FD round-off on them does not dominate the reported error.
    double gscale = 1e-8;
    for (auto& leaf : leaves)
        for (size_t i = 0; i < leaf.numel(); ++i)
            gscale = std::max(gscale, std::abs(leaf.grad()[i]));

    double worst = 0.0;
    for (auto& leaf : leaves) {
        for (size_t i = 0; i < leaf.numel(); ++i) {
            const double orig = leaf.data()[i];
            leaf.data()[i] = orig + h;
            const double fp = build(leaves).item();
            leaf.data()[i] = orig - h;
            const double fm = build(leaves).item();
            leaf.data()[i] = orig;
            const double num = (fp - fm) / (2 * h);
            const double ana = leaf.grad()[i];
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-3 * gscale});
            worst = std::max(worst, std::abs(num - ana) / denom);
        }
    }
    return worst;
}
