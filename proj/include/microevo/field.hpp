#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace microevo {

// Rectangular grid of 32-bit reals with a physical pixel size. Row-major,
// immutable by convention once handed to a sequence/library.
struct Field2D {
    int height = 0;
    int width = 0;
    float pixel_size_mm = 1.0f;
    std::vector<float> values;

    Field2D() = default;
    Field2D(int h, int w, float pixel_mm, float fill = 0.0f)
        : height(h), width(w), pixel_size_mm(pixel_mm),
          values(static_cast<size_t>(h) * w, fill) {}

    float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return values.size(); }

    void validate() const;  // throws std::invalid_argument on violated invariants
};

struct SampleSequence {
    std::vector<Field2D> frames;
    std::string dt_label;

    void validate() const;
};

struct LibraryManifest {
    std::string generator;
    std::uint64_t seed = 0;
    std::string created;             // ISO-8601; pinned in deterministic mode
    nlohmann::json params;           // generator parameter record
    nlohmann::json extra;            // per-sample metadata, split records, ...

    nlohmann::json to_json() const;
    static LibraryManifest from_json(const nlohmann::json& j);
};

struct DigitalLibrary {
    std::vector<SampleSequence> samples;
    LibraryManifest manifest;

    void validate() const;
};

// One supervised item: in_len input frames followed by out_len targets.
struct WindowItem {
    std::vector<Field2D> inputs;
    std::vector<Field2D> targets;
};

struct WindowedDataset {
    std::vector<WindowItem> items;
    int in_len = 0;
    int out_len = 0;
};

// Closed-form window count: floor((T - in - out)/step) + 1.
int window_count(int total_frames, int in_len, int out_len, int step);

std::vector<WindowItem> slide_windows(const SampleSequence& seq, int in_len,
                                      int out_len, int step);

WindowedDataset make_windowed_dataset(const DigitalLibrary& lib, int in_len,
                                      int out_len, int step,
                                      int max_frames_per_sequence = -1);

// First n_train samples in generation order; a seeded shuffle first when
// shuffle is set. The split is recorded in both manifests.
std::pair<DigitalLibrary, DigitalLibrary> split_library(const DigitalLibrary& lib,
                                                        int n_train,
                                                        std::uint64_t seed,
                                                        bool shuffle = false);

// 8-bit min-max scaled PGM, for eyeballing frames.
void write_pgm(const Field2D& field, const std::string& path);

}  // namespace microevo
