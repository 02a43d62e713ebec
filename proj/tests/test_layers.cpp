#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "microevo/layers.hpp"

using namespace microevo::nn;

namespace {
constexpr double kTol = 1e-6;
constexpr int kSeeds = 10;

RnnCell<double> random_rnn(int in, int hidden, std::mt19937_64& rng) {
    auto c = RnnCell<double>::create(in, hidden, rng);
    for (auto& v : c.b.data()) v = 0.1;  // exercise the bias path too
    return c;
}
}  // namespace

TEST_CASE("initialization: bounds, zero biases, seed determinism") {
    std::mt19937_64 a(5), b(5);
    auto d1 = Dense<double>::create(20, 30, a);
    auto d2 = Dense<double>::create(20, 30, b);
    CHECK(d1.w.data() == d2.w.data());
    const double bound = std::sqrt(6.0 / (20 + 30));
    for (double v : d1.w.data()) CHECK(std::abs(v) <= bound);
    for (double v : d1.b.data()) CHECK(v == 0.0);
    CHECK(d1.w.numel() == 600);
    CHECK(d1.b.numel() == 30);
}

TEST_CASE("dense layer closed-form parameter count") {
    std::mt19937_64 rng(1);
    auto d = Dense<double>::create(7, 11, rng);
    CHECK(d.w.numel() + d.b.numel() == 7 * 11 + 11);
}

TEST_CASE("finite differences: rnn cell over two steps") {
    for (int s = 0; s < kSeeds; ++s) {
        std::mt19937_64 rng(1000 + s);
        auto cell = random_rnn(4, 3, rng);
        std::vector<DTensor> leaves{random_tensor({2, 4}, rng),
                                    random_tensor({2, 4}, rng), cell.w_x, cell.w_h,
                                    cell.b};
        auto build = [&cell](std::vector<DTensor>& l) {
            auto h = DTensor::zeros({2, 3});
            h = rnn_cell_step(l[0], h, cell);
            h = rnn_cell_step(l[1], h, cell);
            return sum(mul(h, h));
        };
        CHECK(fd_max_rel_error(leaves, build) < kTol);
    }
}

TEST_CASE("finite differences: lstm cell over two steps") {
    for (int s = 0; s < kSeeds; ++s) {
        std::mt19937_64 rng(2000 + s);
        auto cell = LstmCell<double>::create(4, 3, rng);
        std::vector<DTensor> leaves{random_tensor({2, 4}, rng),
                                    random_tensor({2, 4}, rng), cell.w_x, cell.w_h,
                                    cell.b};
        auto build = [&cell](std::vector<DTensor>& l) {
            auto h = DTensor::zeros({2, 3});
            auto c = DTensor::zeros({2, 3});
            std::tie(h, c) = lstm_cell_step(l[0], h, c, cell);
            std::tie(h, c) = lstm_cell_step(l[1], h, c, cell);
            return sum(mul(h, c));
        };
        CHECK(fd_max_rel_error(leaves, build) < kTol);
    }
}

TEST_CASE("finite differences: conv-lstm cell") {
    for (int s = 0; s < kSeeds; ++s) {
        std::mt19937_64 rng(3000 + s);
        auto cell = ConvLstmCell<double>::create(2, 3, 3, rng);
        std::vector<DTensor> leaves{random_tensor({1, 2, 4, 5}, rng), cell.w_x,
                                    cell.w_h, cell.b};
        auto build = [&cell](std::vector<DTensor>& l) {
            auto h = DTensor::zeros({1, 3, 4, 5});
            auto c = DTensor::zeros({1, 3, 4, 5});
            std::tie(h, c) = conv_lstm_cell_step(l[0], h, c, cell);
            std::tie(h, c) = conv_lstm_cell_step(l[0], h, c, cell);
            return sum(mul(h, h));
        };
        CHECK(fd_max_rel_error(leaves, build) < kTol);
    }
}

TEST_CASE("conv-lstm with 1x1 kernels equals a pixelwise dense lstm") {
    std::mt19937_64 rng(77);
    const int c_in = 3, c_h = 4, H = 5, W = 6;
    auto conv_cell = ConvLstmCell<double>::create(c_in, c_h, 1, rng);
    // Pack the same weights into a dense LSTM over the channel vector.
    LstmCell<double> dense;
    dense.hidden = c_h;
    dense.w_x = DTensor::from({4 * c_h, c_in}, conv_cell.w_x.data());
    dense.w_h = DTensor::from({4 * c_h, c_h}, conv_cell.w_h.data());
    dense.b = DTensor::from({4 * c_h}, conv_cell.b.data());

    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto x = DTensor::zeros({1, c_in, H, W});
    for (auto& v : x.data()) v = dist(rng);

    auto h = DTensor::zeros({1, c_h, H, W});
    auto c = DTensor::zeros({1, c_h, H, W});
    for (int step = 0; step < 3; ++step)
        std::tie(h, c) = conv_lstm_cell_step(x, h, c, conv_cell);

    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            auto px = DTensor::zeros({1, c_in});
            for (int ch = 0; ch < c_in; ++ch)
                px.data()[ch] = x.data()[(static_cast<size_t>(ch) * H + i) * W + j];
            auto ph = DTensor::zeros({1, c_h});
            auto pc = DTensor::zeros({1, c_h});
            for (int step = 0; step < 3; ++step)
                std::tie(ph, pc) = lstm_cell_step(px, ph, pc, dense);
            for (int ch = 0; ch < c_h; ++ch) {
                const double hv = h.data()[(static_cast<size_t>(ch) * H + i) * W + j];
                CHECK(hv == doctest::Approx(ph.data()[ch]).epsilon(1e-6));
            }
        }
}

TEST_CASE("adam: hand-checked first step and grad reset") {
    auto p = Tensor<double>::from({1}, {1.0}, true);
    p.grad()[0] = 1.0;
    std::vector<Tensor<double>> params{p};
    AdamState<double> adam;
    adam.init(params);
    adam.update(params);
    // mhat = vhat = 1 after bias correction, so the step is lr/(1+eps).
    CHECK(p.data()[0] == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("adam: converges on a quadratic") {
    auto p = Tensor<double>::from({1}, {2.0}, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> adam;
    adam.lr = 0.05;
    adam.init(params);
    for (int i = 0; i < 500; ++i) {
        auto loss = mul(p, p);
        loss.backward();
        adam.update(params);
    }
    CHECK(std::abs(p.data()[0]) < 1e-3);
}

TEST_CASE("adam rejects mismatched parameter lists") {
    AdamState<double> adam;
    std::vector<Tensor<double>> params{Tensor<double>::zeros({2}, true)};
    CHECK_THROWS_AS(adam.update(params), std::invalid_argument);
}
