#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "microevo/field.hpp"
#include "microevo/library_io.hpp"

using namespace microevo;
namespace fs = std::filesystem;

namespace {

Field2D ramp_field(int h, int w, float base) {
    Field2D f(h, w, 0.5f);
    for (size_t i = 0; i < f.values.size(); ++i)
        f.values[i] = base + static_cast<float>(i);
    return f;
}

DigitalLibrary tiny_library(int n_samples, int n_frames, int h, int w) {
    DigitalLibrary lib;
    for (int s = 0; s < n_samples; ++s) {
        SampleSequence seq;
        for (int t = 0; t < n_frames; ++t)
            seq.frames.push_back(ramp_field(h, w, static_cast<float>(100 * s + t)));
        lib.samples.push_back(std::move(seq));
    }
    lib.manifest.generator = "test";
    lib.manifest.seed = 7;
    lib.manifest.created = "1970-01-01T00:00:00Z";
    lib.manifest.params = {{"n", n_samples}};
    return lib;
}

}  // namespace

TEST_CASE("Field2D validation") {
    Field2D ok(2, 3, 0.1f);
    CHECK_NOTHROW(ok.validate());
    Field2D bad = ok;
    bad.values.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    Field2D nan = ok;
    nan.values[0] = std::nanf("");
    CHECK_THROWS_AS(nan.validate(), std::invalid_argument);
    CHECK_THROWS_AS(Field2D(0, 3, 0.1f).validate(), std::invalid_argument);
    CHECK_THROWS_AS(Field2D(2, 3, 0.0f).validate(), std::invalid_argument);
}

TEST_CASE("window_count closed form") {
    CHECK(window_count(8, 3, 1, 1) == 5);    // FCG protocol, per sequence
    CHECK(window_count(67, 10, 10, 1) == 48);  // Turing protocol (truncated)
    CHECK(window_count(68, 10, 10, 1) == 49);  // untruncated, documented off-by-one
    CHECK(window_count(4, 3, 1, 1) == 1);
    CHECK(window_count(10, 2, 2, 3) == 3);
    CHECK_THROWS_AS(window_count(3, 3, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(window_count(8, 3, 1, 0), std::invalid_argument);
}

TEST_CASE("slide_windows content and counts") {
    auto lib = tiny_library(1, 8, 2, 2);
    auto items = slide_windows(lib.samples[0], 3, 1, 1);
    REQUIRE(items.size() == 5);
    for (size_t j = 0; j < items.size(); ++j) {
        REQUIRE(items[j].inputs.size() == 3);
        REQUIRE(items[j].targets.size() == 1);
        CHECK(items[j].inputs[0].values == lib.samples[0].frames[j].values);
        CHECK(items[j].targets[0].values == lib.samples[0].frames[j + 3].values);
    }
}

TEST_CASE("make_windowed_dataset honors per-sequence truncation") {
    auto lib = tiny_library(3, 10, 2, 2);
    CHECK(make_windowed_dataset(lib, 3, 1, 1).items.size() == 3u * 7);
    CHECK(make_windowed_dataset(lib, 3, 1, 1, 8).items.size() == 3u * 5);
}

TEST_CASE("split_library: order, sizes, recorded split") {
    auto lib = tiny_library(10, 3, 2, 2);
    auto [train, test] = split_library(lib, 7, 42);
    CHECK(train.samples.size() == 7);
    CHECK(test.samples.size() == 3);
    // unshuffled split preserves generation order
    CHECK(train.samples[0].frames[0].values == lib.samples[0].frames[0].values);
    CHECK(test.samples[0].frames[0].values == lib.samples[7].frames[0].values);
    CHECK(train.manifest.extra["split"]["role"] == "train");
    CHECK(test.manifest.extra["split"]["n_test"] == 3);
    CHECK_THROWS_AS(split_library(lib, 10, 0), std::invalid_argument);

    auto [s1, s1b] = split_library(lib, 7, 9, true);
    auto [s2, s2b] = split_library(lib, 7, 9, true);
    for (int i = 0; i < 7; ++i)
        CHECK(s1.samples[i].frames[0].values == s2.samples[i].frames[0].values);
}

TEST_CASE("library save/load roundtrip") {
    const fs::path dir = fs::temp_directory_path() / "microevo_test_lib";
    fs::remove_all(dir);
    auto lib = tiny_library(3, 4, 5, 6);
    save_library(lib, dir.string());
    auto loaded = load_library(dir.string());
    REQUIRE(loaded.samples.size() == 3);
    REQUIRE(loaded.samples[2].frames.size() == 4);
    CHECK(loaded.samples[2].frames[3].values == lib.samples[2].frames[3].values);
    CHECK(loaded.samples[0].frames[0].pixel_size_mm == 0.5f);
    CHECK(loaded.manifest.generator == "test");
    CHECK(loaded.manifest.seed == 7);
    CHECK(manifest_content_key(loaded.manifest) == manifest_content_key(lib.manifest));
    fs::remove_all(dir);
}

TEST_CASE("library load detects corruption and truncation") {
    const fs::path dir = fs::temp_directory_path() / "microevo_test_corrupt";
    fs::remove_all(dir);
    save_library(tiny_library(1, 3, 4, 4), dir.string());

    const fs::path blob = dir / "sample_0000.bin";
    {
        // flip one payload byte
        std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(20);
        char c;
        f.seekg(20);
        f.get(c);
        f.seekp(20);
        c = static_cast<char>(c ^ 0x5a);
        f.put(c);
    }
    CHECK_THROWS_WITH_AS(load_library(dir.string()),
                         doctest::Contains("checksum"), std::runtime_error);

    save_library(tiny_library(1, 3, 4, 4), dir.string());
    fs::resize_file(blob, 10);
    CHECK_THROWS_WITH_AS(load_library(dir.string()),
                         doctest::Contains("truncated"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("manifest content key ignores the creation timestamp") {
    auto lib = tiny_library(1, 2, 2, 2);
    auto other = lib.manifest;
    other.created = "2026-08-26T12:00:00Z";
    CHECK(manifest_content_key(lib.manifest) == manifest_content_key(other));
    other.seed = 8;
    CHECK(manifest_content_key(lib.manifest) != manifest_content_key(other));
}

TEST_CASE("write_pgm emits a valid P5 header") {
    const fs::path p = fs::temp_directory_path() / "microevo_test.pgm";
    write_pgm(ramp_field(3, 4, 0.0f), p.string());
    std::ifstream in(p, std::ios::binary);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    CHECK(magic == "P5");
    CHECK(w == 4);
    CHECK(h == 3);
    CHECK(maxval == 255);
    in.ignore(1);
    std::vector<char> px(12);
    in.read(px.data(), 12);
    CHECK(in.gcount() == 12);
    CHECK(static_cast<unsigned char>(px[0]) == 0);
    CHECK(static_cast<unsigned char>(px[11]) == 255);
    fs::remove(p);
}
