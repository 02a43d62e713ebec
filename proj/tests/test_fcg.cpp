#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "microevo/fcg.hpp"

using namespace microevo;

TEST_CASE("edge crack geometry factor matches the quartic by hand") {
    // 1.12 - 0.231*0.5 + 10.55*0.25 - 21.72*0.125 + 30.39*0.0625
    CHECK(edge_crack_geometry_factor(0.5) == doctest::Approx(2.826375).epsilon(1e-12));
    CHECK(edge_crack_geometry_factor(0.0) == doctest::Approx(1.12).epsilon(1e-12));
}

TEST_CASE("sif_edge_crack against the handbook formula") {
    PlateSpec plate;
    const double a = 2.0, t = 150.0, s = 80.0;
    const SifPair sif = sif_edge_crack(a, plate, t, s);
    const double root = std::sqrt(std::numbers::pi * a * 1e-3);
    CHECK(sif.k1 == doctest::Approx(edge_crack_geometry_factor(0.2) * t * root).epsilon(1e-12));
    CHECK(sif.k2 == doctest::Approx(1.12 * s * root).epsilon(1e-12));

    CHECK_THROWS_AS(sif_edge_crack(0.0, plate, t, s), std::invalid_argument);
    CHECK_THROWS_WITH_AS(sif_edge_crack(9.5, plate, t, s),
                         doctest::Contains("crack-too-long"), std::runtime_error);
}

TEST_CASE("deflection angle limits and symmetry") {
    SUBCASE("pure mode I goes straight") {
        CHECK(deflection_angle({3.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("pure mode II kinks at acos(1/3) away from the shear") {
        const double theta = std::acos(1.0 / 3.0);
        CHECK(deflection_angle({0.0, 2.0}) == doctest::Approx(-theta).epsilon(1e-12));
        CHECK(deflection_angle({0.0, -2.0}) == doctest::Approx(theta).epsilon(1e-12));
    }
    SUBCASE("the angle depends only on the mode ratio") {
        const double a = deflection_angle({5.0, 1.5});
        const double b = deflection_angle({10.0, 3.0});
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("flipping the shear flips the sign") {
        CHECK(deflection_angle({4.0, 1.0}) ==
              doctest::Approx(-deflection_angle({4.0, -1.0})).epsilon(1e-12));
    }
    CHECK_THROWS_AS(deflection_angle({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("paris increment closed form") {
    MaterialParams mat;
    const double dk = 22.0, n = 1500.0;
    const double expect = n * 9.7e-12 * dk * dk * dk;
    CHECK(paris_increment(dk, n, mat) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(paris_increment(0.0, 10.0, mat), std::invalid_argument);
    CHECK_THROWS_AS(paris_increment(5.0, 0.5, mat), std::invalid_argument);
}

static CrackPath grow_any(const PlateSpec& plate, const LoadSpec& loads,
                          const MaterialParams& mat, std::uint64_t* seed_out) {
    for (std::uint64_t s = 0; s < 64; ++s) {
        try {
            CrackPath p = grow_crack(plate, loads, mat, s);
            if (seed_out) *seed_out = s;
            return p;
        } catch (const std::runtime_error&) {
        }
    }
    throw std::runtime_error("no seed in [0,64) produced a valid path");
}

TEST_CASE("grow_crack structure, monotonicity, determinism") {
    PlateSpec plate;
    LoadSpec loads;
    MaterialParams mat;
    std::uint64_t seed = 0;
    const CrackPath path = grow_any(plate, loads, mat, &seed);

    REQUIRE(static_cast<int>(path.segment_frames.size()) == plate.n_segments + 1);
    CHECK(path.segment_frames.front() == 0);
    CHECK(path.cycle_counts.size() == path.vertices.size() - 1);

    for (size_t i = 1; i < path.vertices.size(); ++i)
        CHECK(path.vertices[i].first > path.vertices[i - 1].first);
    for (size_t i = 1; i < path.segment_frames.size(); ++i)
        CHECK(path.segment_frames[i] > path.segment_frames[i - 1]);
    for (double c : path.cycle_counts) CHECK(c > 0.0);

    // Final recorded tip is at the LEFM limit.
    const double tip_x = path.vertices[path.segment_frames.back()].first;
    CHECK(tip_x >= 0.95 * plate.width_mm);
    CHECK(tip_x < plate.width_mm);

    const CrackPath again = grow_crack(plate, loads, mat, seed);
    REQUIRE(again.vertices.size() == path.vertices.size());
    for (size_t i = 0; i < path.vertices.size(); ++i) {
        CHECK(again.vertices[i].first == path.vertices[i].first);
        CHECK(again.vertices[i].second == path.vertices[i].second);
    }
}

TEST_CASE("rasterize_path: one pixel per column, later frames are supersets") {
    PlateSpec plate;
    LoadSpec loads;
    MaterialParams mat;
    const CrackPath path = grow_any(plate, loads, mat, nullptr);

    const int last = static_cast<int>(path.segment_frames.size()) - 1;
    Field2D prev;
    double prev_tip_x = 0.0;
    for (int f = 0; f <= last; ++f) {
        const Field2D img = rasterize_path(path, f, plate);
        CHECK(img.height == plate.raster_ny);
        CHECK(img.width == plate.raster_nx);
        const double tip_x = path.vertices[path.segment_frames[f]].first;
        for (int c = 0; c < img.width; ++c) {
            float col_sum = 0.0f;
            for (int r = 0; r < img.height; ++r) {
                const float v = img.at(r, c);
                CHECK((v == 0.0f || v == 1.0f));
                col_sum += v;
            }
            if (c * plate.pixel_size_mm < tip_x)
                CHECK(col_sum == 1.0f);
            else
                CHECK(col_sum == 0.0f);
        }
        if (f > 0) {
            // The tip column samples the path at the tip itself, so its row
            // may move between frames; interior columns are frozen once the
            // tip has passed them.
            for (int c = 0; c < img.width; ++c) {
                const double xc = (c + 0.5) * plate.pixel_size_mm;
                if (xc >= prev_tip_x) continue;
                for (int r = 0; r < img.height; ++r)
                    CHECK(img.at(r, c) == prev.at(r, c));
            }
        }
        prev = img;
        prev_tip_x = tip_x;
    }

    CHECK_THROWS_AS(rasterize_path(path, last + 1, plate), std::invalid_argument);
    CHECK_THROWS_AS(rasterize_path(path, -1, plate), std::invalid_argument);
}

TEST_CASE("build_fcg_library smoke and determinism") {
    PlateSpec plate;
    LoadSpec loads;
    MaterialParams mat;
    FcgBuildOptions opt;
    opt.n_samples = 10;
    opt.base_seed = 7;
    opt.deterministic_timestamp = true;

    const DigitalLibrary lib = build_fcg_library(opt, plate, loads, mat);
    lib.validate();
    REQUIRE(lib.samples.size() == 10);
    CHECK(lib.manifest.generator == "fcg-paris-msc");
    CHECK(lib.manifest.created == "1970-01-01T00:00:00Z");
    for (const auto& s : lib.samples) {
        REQUIRE(static_cast<int>(s.frames.size()) == plate.n_segments + 1);
        for (const auto& f : s.frames) {
            CHECK(f.height == plate.raster_ny);
            CHECK(f.width == plate.raster_nx);
        }
    }

    const DigitalLibrary again = build_fcg_library(opt, plate, loads, mat);
    REQUIRE(again.samples.size() == lib.samples.size());
    for (size_t i = 0; i < lib.samples.size(); ++i) {
        const auto& a = lib.samples[i].frames;
        const auto& b = again.samples[i].frames;
        REQUIRE(a.size() == b.size());
        for (size_t f = 0; f < a.size(); ++f)
            CHECK(a[f].values == b[f].values);
    }
}
