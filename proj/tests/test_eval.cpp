#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "microevo/eval.hpp"

using namespace microevo;
using namespace microevo::eval;

namespace {

Field2D constant_field(int h, int w, float v) {
    Field2D f(h, w, 1.0f, v);
    return f;
}

}  // namespace

TEST_CASE("mae by hand and metric properties") {
    Field2D pred(2, 2, 1.0f);
    Field2D truth(2, 2, 1.0f);
    pred.values = {0.0f, 1.0f, 0.5f, 1.0f};
    truth.values = {0.5f, 1.0f, 0.0f, 0.5f};
    // (0.5 + 0 + 0.5 + 0.5) / 4
    CHECK(mae(pred, truth) == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(mae(pred, pred) == 0.0);
    CHECK(mae(pred, truth) == mae(truth, pred));
    CHECK_THROWS_AS(mae(pred, constant_field(3, 2, 0.0f)), std::invalid_argument);
}

TEST_CASE("error curve with stub rollers") {
    // Three sequences of 6 frames, values t/10 everywhere.
    std::vector<SampleSequence> test_set(3);
    for (auto& seq : test_set)
        for (int t = 0; t < 6; ++t)
            seq.frames.push_back(constant_field(4, 5, 0.1f * t));

    SUBCASE("a perfect oracle scores zero at every step") {
        Roller oracle = [&](const std::vector<Field2D>& seed, int horizon) {
            const int in_len = static_cast<int>(seed.size());
            std::vector<Field2D> out;
            for (int t = 0; t < horizon; ++t)
                out.push_back(constant_field(4, 5, 0.1f * (in_len + t)));
            return out;
        };
        const ErrorCurve c = error_curve(oracle, test_set, 3, 3);
        REQUIRE(c.per_step.size() == 3);
        for (double v : c.per_step) CHECK(v == 0.0);
        CHECK(c.cumulative == 0.0);
    }

    SUBCASE("a persistence roller accrues linearly growing error") {
        Roller persist = [](const std::vector<Field2D>& seed, int horizon) {
            return std::vector<Field2D>(horizon, seed.back());
        };
        const ErrorCurve c = error_curve(persist, test_set, 3, 3);
        REQUIRE(c.per_step.size() == 3);
        // Last input is 0.2; truth is 0.3, 0.4, 0.5.
        CHECK(c.per_step[0] == doctest::Approx(0.1).epsilon(1e-6));
        CHECK(c.per_step[1] == doctest::Approx(0.2).epsilon(1e-6));
        CHECK(c.per_step[2] == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(c.cumulative == doctest::Approx(0.2).epsilon(1e-6));
    }

    SUBCASE("validation") {
        Roller persist = [](const std::vector<Field2D>& seed, int horizon) {
            return std::vector<Field2D>(horizon, seed.back());
        };
        CHECK_THROWS_AS(error_curve(persist, test_set, 3, 4), std::invalid_argument);
        CHECK_THROWS_AS(error_curve(persist, {}, 3, 1), std::invalid_argument);
        Roller broken = [](const std::vector<Field2D>& seed, int) {
            return std::vector<Field2D>(1, seed.back());
        };
        CHECK_THROWS_AS(error_curve(broken, test_set, 3, 2), std::runtime_error);
    }
}

TEST_CASE("memory cost formulas") {
    CHECK(memory_pixel(4, 132, 96) == 4u * 132 * 96);
    CHECK(memory_pixel(1, 200, 200) == 40000u);
    // 2 * 4 bytes * 40 nodes + 24-byte affine matrix.
    CHECK(memory_vector(40) == 344u);
    CHECK(memory_vector(40, 8) == 664u);  // 2*8*40 + 24
    // Linearity in the node count.
    CHECK(memory_vector(80) - memory_vector(40) == 2u * 4 * 40);
    CHECK(memory_model(4, 1477) == 5908u);
    CHECK_THROWS_AS(memory_pixel(0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(memory_vector(0), std::invalid_argument);
}

TEST_CASE("interface thickness") {
    SUBCASE("one-pixel-thick crack raster measures 1") {
        Field2D f(9, 7, 1.0f);
        for (int c = 0; c < 5; ++c) f.at(4 + (c % 2), c) = 1.0f;
        CHECK(interface_thickness(f) == 1);
    }
    SUBCASE("a widened band measures its vertical extent") {
        Field2D f(9, 7, 1.0f);
        for (int c = 0; c < 7; ++c)
            for (int r = 3; r < 6; ++r) f.at(r, c) = 0.2f;
        CHECK(interface_thickness(f, 0.1f) == 3);
    }
    SUBCASE("columns without signal are excluded; lower median") {
        Field2D f(6, 4, 1.0f);
        f.at(0, 0) = 1.0f;                          // run 1
        for (int r = 0; r < 3; ++r) f.at(r, 2) = 1.0f;  // run 3
        // Columns 1 and 3 are empty; runs {1, 3}, lower median = 1.
        CHECK(interface_thickness(f) == 1);
    }
    SUBCASE("broken runs count the longest segment") {
        Field2D f(8, 1, 1.0f);
        f.at(0, 0) = f.at(1, 0) = 1.0f;
        f.at(4, 0) = f.at(5, 0) = f.at(6, 0) = 1.0f;
        CHECK(interface_thickness(f) == 3);
    }
    CHECK(interface_thickness(constant_field(5, 5, 0.0f)) == 0);
    CHECK_THROWS_AS(interface_thickness(Field2D()), std::invalid_argument);
}

TEST_CASE("weight statistics over convolution kernels") {
    nn::ModelSpec spec;
    spec.family = nn::ModelFamily::base_snn;
    spec.height = 12;
    spec.width = 16;
    spec.seed = 3;
    nn::Model model = nn::build_model(spec);

    SUBCASE("layer selection: kernels only, biases excluded") {
        const WeightStats stats = weight_statistics(model);
        REQUIRE(stats.per_layer.size() == 4);
        CHECK(stats.per_layer[0].first == "enc1.w");
        CHECK(stats.per_layer[1].first == "enc2.w");
        CHECK(stats.per_layer[2].first == "dec1.w");
        CHECK(stats.per_layer[3].first == "dec2.w");
        // 144 + 576 + 576 + 144 kernel weights, no biases.
        CHECK(stats.pooled.n_weights == 1440u);
        long total = std::accumulate(stats.pooled.counts.begin(),
                                     stats.pooled.counts.end(), 0L);
        CHECK(total == 1440);
        CHECK(stats.pooled.counts.size() == 101u);
        CHECK(stats.pooled.bin_min == -stats.pooled.bin_max);
    }

    SUBCASE("hand-set weights: zeros and a symmetric pair") {
        for (auto& [name, t] : model.params)
            for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
        WeightStats zeros = weight_statistics(model);
        CHECK(zeros.pooled.variance == 0.0);
        CHECK(zeros.pooled.bin_max == 0.0);
        CHECK(zeros.pooled.counts[50] == static_cast<long>(zeros.pooled.n_weights));

        // Half the first kernel at -1, half at +1: mean 0, population var below 1.
        auto& w = model.params[0].second;  // enc1.w, 160 entries incl. none (w only)
        REQUIRE(model.params[0].first == "enc1.w");
        for (size_t i = 0; i < w.numel(); ++i)
            w.data()[i] = i % 2 == 0 ? 1.0f : -1.0f;
        WeightStats pm = weight_statistics(model);
        const auto& layer = pm.per_layer[0].second;
        CHECK(layer.variance == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(layer.bin_max == 1.0);
        CHECK(layer.counts.front() + layer.counts.back() ==
              static_cast<long>(layer.n_weights));
    }

    SUBCASE("fresh init variance is close to the uniform-init formula") {
        // enc2.w: fan_in 16*9, fan_out 4*9; U(-b, b) has variance b^2/3.
        const auto stats = weight_statistics(model);
        const auto& enc2 = stats.per_layer[1].second;
        REQUIRE(enc2.n_weights == 576u);
        const double bound = std::sqrt(6.0 / (16 * 9 + 4 * 9));
        const double expect = bound * bound / 3.0;
        CHECK(enc2.variance == doctest::Approx(expect).epsilon(0.15));
    }
}

TEST_CASE("connectivity density") {
    nn::ModelSpec spec;
    spec.family = nn::ModelFamily::base_snn;
    spec.height = 12;
    spec.width = 16;
    nn::Model model = nn::build_model(spec);

    // Hand-set: first kernel has 10 of 144 weights above threshold, rest zero.
    for (auto& [name, t] : model.params)
        for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
    auto& w = model.params[0].second;
    for (size_t i = 0; i < 10; ++i) w.data()[i] = 0.5f;

    const ConnectivityReport rep = connectivity_density(model, 0.001);
    REQUIRE(rep.per_layer.size() == 4);
    CHECK(rep.per_layer[0].second == doctest::Approx(10.0 / 144.0).epsilon(1e-12));
    CHECK(rep.per_layer[1].second == 0.0);
    CHECK(rep.pooled == doctest::Approx(10.0 / 1440.0).epsilon(1e-12));

    // Threshold zero links everything (|w| >= 0 always).
    const ConnectivityReport all = connectivity_density(model, 0.0);
    CHECK(all.pooled == 1.0);

    // Density is monotone non-increasing in the threshold.
    nn::Model fresh = nn::build_model(spec);
    double prev = 1.0;
    for (double th : {0.0, 0.01, 0.05, 0.1, 0.5}) {
        const double d = connectivity_density(fresh, th).pooled;
        CHECK(d <= prev);
        prev = d;
    }
}

TEST_CASE("eval report serializes") {
    nn::ModelSpec spec;
    spec.family = nn::ModelFamily::base_snn;
    spec.height = 12;
    spec.width = 16;
    const nn::Model model = nn::build_model(spec);

    EvalReport rep;
    rep.curve.per_step = {0.1, 0.2};
    rep.curve.cumulative = 0.15;
    rep.n_params = model.param_count();
    rep.m_pixel = memory_pixel(4, 16, 12);
    rep.m_vector = memory_vector(40);
    rep.m_model = memory_model(4, rep.n_params);
    rep.weights = weight_statistics(model);
    rep.connectivity = connectivity_density(model);

    const nlohmann::json j = rep.to_json();
    CHECK(j["mae_cumulative"] == 0.15);
    CHECK(j["n_params"] == 1477);
    CHECK(j["memory_bytes"]["vector"] == 344);
    CHECK(j["weight_statistics"]["per_layer"].size() == 4);
    CHECK(j["connectivity"]["per_layer"].size() == 4);
}
