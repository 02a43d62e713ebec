#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "microevo/spiking.hpp"

using namespace microevo::nn;

namespace {
LifState<double> state_of(std::vector<double> u, std::vector<double> o) {
    const int n = static_cast<int>(u.size());
    LifState<double> s;
    s.u = Tensor<double>::from({1, n}, std::move(u));
    s.o = Tensor<double>::from({1, n}, std::move(o));
    return s;
}
}  // namespace

TEST_CASE("lif: quiescence") {
    LifParams<double> p;
    auto s = lif_step(state_of({0.0}, {0.0}), Tensor<double>::from({1, 1}, {0.0}), p);
    CHECK(s.u.data()[0] == 0.0);
    CHECK(s.o.data()[0] == 0.0);
}

TEST_CASE("lif: two-step hand trace of Eq. 6-7") {
    LifParams<double> p;  // decay 0.5, u_th 1.0
    auto s = lif_step(state_of({0.8}, {0.0}), Tensor<double>::from({1, 1}, {0.5}), p);
    CHECK(s.u.data()[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.o.data()[0] == 0.0);

    s = lif_step(state_of({0.8}, {0.0}), Tensor<double>::from({1, 1}, {0.7}), p);
    CHECK(s.u.data()[0] == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(s.o.data()[0] == 1.0);
    s = lif_step(s, Tensor<double>::from({1, 1}, {0.0}), p);
    CHECK(s.u.data()[0] == 0.0);  // hard reset via (1 - o_prev)
    CHECK(s.o.data()[0] == 0.0);
}

TEST_CASE("lif: geometric decay under zero input, spikes stay binary") {
    LifParams<double> p;
    auto s = state_of({0.9}, {0.0});
    const auto zero = Tensor<double>::from({1, 1}, {0.0});
    for (int t = 1; t <= 20; ++t) {
        s = lif_step(s, zero, p);
        CHECK(s.u.data()[0] == 0.9 * std::pow(0.5, t));
        CHECK((s.o.data()[0] == 0.0 || s.o.data()[0] == 1.0));
    }
}

TEST_CASE("lif: linearity of the input term") {
    LifParams<double> p;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        const double u0 = dist(rng), i0 = dist(rng), alpha = 2.0 * dist(rng);
        auto base = lif_step(state_of({u0}, {0.0}),
                             Tensor<double>::from({1, 1}, {0.0}), p);
        auto ui = lif_step(state_of({u0}, {0.0}),
                           Tensor<double>::from({1, 1}, {i0}), p);
        auto uai = lif_step(state_of({u0}, {0.0}),
                            Tensor<double>::from({1, 1}, {alpha * i0}), p);
        CHECK(uai.u.data()[0] - base.u.data()[0] ==
              doctest::Approx(alpha * (ui.u.data()[0] - base.u.data()[0]))
                  .epsilon(1e-12));
    }
}

TEST_CASE("lif: non-binary previous spikes rejected") {
    LifParams<double> p;
    CHECK_THROWS_AS(
        lif_step(state_of({0.0}, {0.5}), Tensor<double>::from({1, 1}, {0.0}), p),
        std::invalid_argument);
}

TEST_CASE("surrogate gradient: rectangular window") {
    LifParams<double> p;
    CHECK(surrogate_spike_grad(0.0, p) == 1.0);
    CHECK(surrogate_spike_grad(0.5, p) == 1.0);
    CHECK(surrogate_spike_grad(-0.5, p) == 1.0);
    CHECK(surrogate_spike_grad(0.6, p) == 0.0);
    p.surrogate_width = 2.0;
    CHECK(surrogate_spike_grad(0.9, p) == 0.5);
}

TEST_CASE("stc with zeroed gates is bitwise lif") {
    LifParams<float> p;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(0.0f, 1.5f);
    auto gates = StcGates<float>::zeros(3);
    LifState<float> a = LifState<float>::zeros({2, 3, 4, 4});
    LifState<float> b = LifState<float>::zeros({2, 3, 4, 4});
    for (int t = 0; t < 6; ++t) {
        auto input = Tensor<float>::zeros({2, 3, 4, 4});
        for (auto& v : input.data()) v = dist(rng);
        a = lif_step(a, input, p);
        b = stc_lif_step(b, input, gates, p);
        CHECK(a.u.data() == b.u.data());
        CHECK(a.o.data() == b.o.data());
    }
}

TEST_CASE("stc spatial gate: identity kernel raises one pixel's current") {
    LifParams<double> p;
    const int C = 1, H = 3, W = 3;
    auto gates = StcGates<double>::zeros(C);
    gates.w_s.data()[4] = 0.25;  // center tap of the single 3x3 kernel

    LifState<double> prev;
    prev.u = Tensor<double>::zeros({1, C, H, W});
    prev.o = Tensor<double>::zeros({1, C, H, W});
    prev.o.data()[4] = 1.0;  // spike at the center pixel

    auto input = Tensor<double>::zeros({1, C, H, W});
    auto next = stc_lif_step(prev, input, gates, p);
    for (size_t i = 0; i < next.u.numel(); ++i)
        CHECK(next.u.data()[i] == (i == 4 ? 0.25 : 0.0));
}

TEST_CASE("stc gate parameters pass finite-difference checks") {
    // One step from a state with a fixed binary spike pattern: every gate
    // tensor (a, c, b, w_s) contributes to the membrane through a smooth
    // path, so the surrogate-equipped graph must match central differences.
    for (int s = 0; s < 5; ++s) {
        std::mt19937_64 rng(4000 + s);
        auto gates = StcGates<double>::create(2, rng);
        for (auto& v : gates.w_s.data()) v *= 0.1;  // keep u below the window
        for (auto& v : gates.a.data()) v = 0.3;
        for (auto& v : gates.c.data()) v = -0.2;
        for (auto& v : gates.b.data()) v = 0.1;
        LifParams<double> p;

        LifState<double> prev;
        prev.u = random_tensor({1, 2, 3, 3}, rng, 0.0, 0.2);
        prev.o = DTensor::zeros({1, 2, 3, 3});
        for (size_t i = 0; i < prev.o.numel(); i += 3) prev.o.data()[i] = 1.0;

        std::vector<DTensor> leaves{random_tensor({1, 2, 3, 3}, rng, 0.0, 0.2),
                                    gates.a, gates.c, gates.b, gates.w_s};
        auto build = [&gates, &p, &prev](std::vector<DTensor>& l) {
            auto st = stc_lif_step(prev, l[0], gates, p);
            return sum(mul(st.u, st.u));
        };
        CHECK(fd_max_rel_error(leaves, build) < 1e-4);
    }
}

TEST_CASE("single surrogate-trained neuron learns a threshold task") {
    // One weight; spike for input 0.9, stay quiet for 0.3.
    auto w = Tensor<double>::from({1}, {0.8}, true);
    std::vector<Tensor<double>> params{w};
    AdamState<double> adam;
    adam.lr = 0.01;
    adam.init(params);
    LifParams<double> p;
    const std::vector<std::pair<double, double>> task{{0.9, 1.0}, {0.3, 0.0}};
    for (int step = 0; step < 500; ++step) {
        auto loss = Tensor<double>::zeros({1});
        for (const auto& [x, target] : task) {
            auto u = scale(w, x);
            auto o = spike(u, p.u_th, p.surrogate_width);
            loss = add(loss, mse_loss(o, Tensor<double>::from({1}, {target})));
        }
        loss.backward();
        adam.update(params);
    }
    CHECK(w.data()[0] * 0.9 >= 1.0);
    CHECK(w.data()[0] * 0.3 < 1.0);
}
