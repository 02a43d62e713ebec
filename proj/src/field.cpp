#include "microevo/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace microevo {

void Field2D::validate() const {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("Field2D: non-positive dimensions");
    if (pixel_size_mm <= 0.0f)
        throw std::invalid_argument("Field2D: pixel_size_mm must be > 0");
    if (values.size() != static_cast<size_t>(height) * width)
        throw std::invalid_argument("Field2D: values.length != height*width");
    for (float v : values)
        if (!std::isfinite(v))
            throw std::invalid_argument("Field2D: non-finite value");
}

void SampleSequence::validate() const {
    if (frames.size() < 2)
        throw std::invalid_argument("SampleSequence: needs at least 2 frames");
    const Field2D& f0 = frames.front();
    for (const Field2D& f : frames) {
        if (f.height != f0.height || f.width != f0.width ||
            f.pixel_size_mm != f0.pixel_size_mm)
            throw std::invalid_argument("SampleSequence: inconsistent frame geometry");
    }
}

void DigitalLibrary::validate() const {
    if (samples.empty()) return;
    const Field2D& f0 = samples.front().frames.front();
    size_t t0 = samples.front().frames.size();
    for (const SampleSequence& s : samples) {
        s.validate();
        if (s.frames.size() != t0)
            throw std::invalid_argument("DigitalLibrary: inconsistent sequence length");
        if (s.frames.front().height != f0.height || s.frames.front().width != f0.width)
            throw std::invalid_argument("DigitalLibrary: inconsistent frame dimensions");
    }
}

nlohmann::json LibraryManifest::to_json() const {
    nlohmann::json j;
    j["generator"] = generator;
    j["seed"] = seed;
    j["created"] = created;
    j["params"] = params;
    j["extra"] = extra;
    return j;
}

LibraryManifest LibraryManifest::from_json(const nlohmann::json& j) {
    LibraryManifest m;
    m.generator = j.at("generator").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created = j.value("created", "");
    m.params = j.value("params", nlohmann::json::object());
    m.extra = j.value("extra", nlohmann::json::object());
    return m;
}

int window_count(int total_frames, int in_len, int out_len, int step) {
    if (in_len < 1 || out_len < 1 || step < 1)
        throw std::invalid_argument("window_count: in/out/step must be >= 1");
    if (total_frames < in_len + out_len)
        throw std::invalid_argument("window_count: sequence too short");
    return (total_frames - in_len - out_len) / step + 1;
}

std::vector<WindowItem> slide_windows(const SampleSequence& seq, int in_len,
                                      int out_len, int step) {
    const int T = static_cast<int>(seq.frames.size());
    const int n = window_count(T, in_len, out_len, step);
    std::vector<WindowItem> items;
    items.reserve(n);
    for (int j = 0; j < n; ++j) {
        WindowItem it;
        const int base = j * step;
        it.inputs.assign(seq.frames.begin() + base, seq.frames.begin() + base + in_len);
        it.targets.assign(seq.frames.begin() + base + in_len,
                          seq.frames.begin() + base + in_len + out_len);
        items.push_back(std::move(it));
    }
    return items;
}

WindowedDataset make_windowed_dataset(const DigitalLibrary& lib, int in_len,
                                      int out_len, int step,
                                      int max_frames_per_sequence) {
    WindowedDataset ds;
    ds.in_len = in_len;
    ds.out_len = out_len;
    for (const SampleSequence& s : lib.samples) {
        SampleSequence view = s;
        if (max_frames_per_sequence > 0 &&
            static_cast<int>(view.frames.size()) > max_frames_per_sequence)
            view.frames.resize(max_frames_per_sequence);
        auto items = slide_windows(view, in_len, out_len, step);
        std::move(items.begin(), items.end(), std::back_inserter(ds.items));
    }
    return ds;
}

std::pair<DigitalLibrary, DigitalLibrary> split_library(const DigitalLibrary& lib,
                                                        int n_train,
                                                        std::uint64_t seed,
                                                        bool shuffle) {
    const int n = static_cast<int>(lib.samples.size());
    if (n_train <= 0 || n_train >= n)
        throw std::invalid_argument("split_library: need 0 < n_train < n_samples");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    DigitalLibrary train, test;
    train.manifest = lib.manifest;
    test.manifest = lib.manifest;
    for (int i = 0; i < n; ++i)
        (i < n_train ? train : test).samples.push_back(lib.samples[order[i]]);

    nlohmann::json split;
    split["n_train"] = n_train;
    split["n_test"] = n - n_train;
    split["seed"] = seed;
    split["shuffled"] = shuffle;
    train.manifest.extra["split"] = split;
    train.manifest.extra["split"]["role"] = "train";
    test.manifest.extra["split"] = split;
    test.manifest.extra["split"]["role"] = "test";
    return {std::move(train), std::move(test)};
}

void write_pgm(const Field2D& field, const std::string& path) {
    auto [lo_it, hi_it] = std::minmax_element(field.values.begin(), field.values.end());
    const float lo = *lo_it, hi = *hi_it;
    const float scale = (hi > lo) ? 255.0f / (hi - lo) : 0.0f;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << field.width << " " << field.height << "\n255\n";
    for (float v : field.values) {
        unsigned char byte = static_cast<unsigned char>(std::lround((v - lo) * scale));
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace microevo
