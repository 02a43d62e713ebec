#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "microevo/grayscott.hpp"
#include "microevo/library_io.hpp"

using namespace microevo;

namespace {

double variance(const std::vector<float>& v) {
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    return var / v.size();
}

Field2D roll(const Field2D& f, int dy, int dx) {
    Field2D out(f.height, f.width, f.pixel_size_mm);
    for (int r = 0; r < f.height; ++r)
        for (int c = 0; c < f.width; ++c)
            out.at((r + dy) % f.height, (c + dx) % f.width) = f.at(r, c);
    return out;
}

}  // namespace

TEST_CASE("parameter validation: stability bound and negative rates") {
    GrayScottParams p;
    CHECK_NOTHROW(p.validate());  // dt=1 <= 1/(4*0.12)? no: 1/(0.48)=2.083 -> ok
    p.dt = 3.0f;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = GrayScottParams{};
    p.feed = -0.1f;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("laplacian wrapper rejects tiny grids") {
    Field2D f(2, 2, 1.0f);
    CHECK_THROWS_AS(laplacian(f), std::invalid_argument);
}

TEST_CASE("(u,v)=(1,0) is an exact fixed point") {
    GrayScottParams p;
    p.grid_h = 16;
    p.grid_w = 16;
    GrayScottState s;
    s.u = Field2D(16, 16, p.pixel_size_mm, 1.0f);
    s.v = Field2D(16, 16, p.pixel_size_mm, 0.0f);
    gs_advance(s, p, 1000);
    for (float u : s.u.values) CHECK(u == 1.0f);
    for (float v : s.v.values) CHECK(v == 0.0f);
}

TEST_CASE("translation equivariance is bit-exact") {
    GrayScottParams p;
    p.grid_h = 32;
    p.grid_w = 32;
    auto s = random_initial_condition(32, 32, p.pixel_size_mm, 99);
    GrayScottState shifted;
    shifted.u = roll(s.u, 5, 11);
    shifted.v = roll(s.v, 5, 11);
    gs_advance(s, p, 200);
    gs_advance(shifted, p, 200);
    CHECK(roll(s.u, 5, 11).values == shifted.u.values);
    CHECK(roll(s.v, 5, 11).values == shifted.v.values);
}

TEST_CASE("patched initial condition develops structure") {
    GrayScottParams p;
    p.grid_h = 64;
    p.grid_w = 64;
    auto s = random_initial_condition(64, 64, p.pixel_size_mm, 5);
    // The patterns at these rates are a transient: variance rises well above
    // the uniform state and later decays, so sample checkpoints and track the
    // peak rather than probing one fixed step count.
    double peak = variance(s.u.values);
    for (int chunk = 0; chunk < 20 && peak <= 0.01; ++chunk) {
        gs_advance(s, p, 250);
        peak = std::max(peak, variance(s.u.values));
    }
    CHECK(peak > 0.01);
    for (float u : s.u.values) CHECK(std::isfinite(u));
}

TEST_CASE("random_initial_condition: invariants and determinism") {
    auto a = random_initial_condition(40, 40, 1.0f, 3);
    auto b = random_initial_condition(40, 40, 1.0f, 3);
    CHECK(a.u.values == b.u.values);
    CHECK(a.v.values == b.v.values);
    auto c = random_initial_condition(40, 40, 1.0f, 4);
    CHECK(a.u.values != c.u.values);
    // background untouched at the corner-most cells is not guaranteed, but
    // values stay within the designed ranges
    for (float u : a.u.values) CHECK((u >= 0.48f - 1e-6f && u <= 1.0f));
    for (float v : a.v.values) CHECK((v >= 0.0f && v <= 0.27f + 1e-6f));
    CHECK_THROWS_AS(random_initial_condition(8, 8, 1.0f, 1), std::invalid_argument);
}

TEST_CASE("build_turing_library: protocol shape and determinism") {
    GrayScottParams p;
    p.grid_h = 24;
    p.grid_w = 24;
    TuringBuildOptions opt;
    opt.n_sequences = 2;
    opt.frames_per_sequence = 21;
    opt.burn_in_steps = 50;
    opt.record_stride = 5;
    opt.base_seed = 12;
    opt.deterministic_timestamp = true;

    auto lib = build_turing_library(opt, p);
    REQUIRE(lib.samples.size() == 2);
    for (const auto& s : lib.samples) {
        REQUIRE(s.frames.size() == 21);
        CHECK(s.frames[0].height == 24);
        CHECK(s.frames[0].width == 24);
    }
    CHECK(lib.manifest.generator == "turing-gray-scott");
    CHECK(lib.manifest.created == "1970-01-01T00:00:00Z");

    auto lib2 = build_turing_library(opt, p);
    CHECK(manifest_content_key(lib.manifest) == manifest_content_key(lib2.manifest));
    for (size_t i = 0; i < lib.samples.size(); ++i)
        for (size_t t = 0; t < lib.samples[i].frames.size(); ++t)
            CHECK(lib.samples[i].frames[t].values == lib2.samples[i].frames[t].values);

    opt.frames_per_sequence = 10;  // below the documented minimum
    CHECK_THROWS_AS(build_turing_library(opt, p), std::invalid_argument);
}
