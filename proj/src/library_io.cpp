#include "microevo/library_io.hpp"

#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace microevo {

namespace fs = std::filesystem;

namespace {

struct BlobHeader {
    std::uint32_t magic;
    std::uint16_t version;
    std::uint16_t t;
    std::uint16_t h;
    std::uint16_t w;
    float pixel_size_mm;
};
static_assert(sizeof(BlobHeader) == 16);

std::string sample_filename(size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04zu.bin", index);
    return buf;
}

std::vector<char> read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t crc_of(const void* data, size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void save_sequence_blob(const SampleSequence& seq, const fs::path& path) {
    const Field2D& f0 = seq.frames.front();
    BlobHeader hdr{kLibraryMagic, kLibraryVersion,
                   static_cast<std::uint16_t>(seq.frames.size()),
                   static_cast<std::uint16_t>(f0.height),
                   static_cast<std::uint16_t>(f0.width), f0.pixel_size_mm};

    std::vector<char> bytes(sizeof(hdr));
    std::memcpy(bytes.data(), &hdr, sizeof(hdr));
    for (const Field2D& f : seq.frames) {
        const char* p = reinterpret_cast<const char*>(f.values.data());
        bytes.insert(bytes.end(), p, p + f.values.size() * sizeof(float));
    }
    const std::uint32_t crc = crc_of(bytes.data(), bytes.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

SampleSequence load_sequence_blob(const fs::path& path) {
    std::vector<char> bytes = read_all(path);
    if (bytes.size() < sizeof(BlobHeader) + sizeof(std::uint32_t))
        throw std::runtime_error("truncated sample blob: " + path.string());

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - sizeof(stored_crc),
                sizeof(stored_crc));
    const size_t payload_len = bytes.size() - sizeof(stored_crc);
    if (crc_of(bytes.data(), payload_len) != stored_crc)
        throw std::runtime_error("checksum mismatch in " + path.string());

    BlobHeader hdr;
    std::memcpy(&hdr, bytes.data(), sizeof(hdr));
    if (hdr.magic != kLibraryMagic)
        throw std::runtime_error("bad magic in " + path.string());
    if (hdr.version != kLibraryVersion)
        throw std::runtime_error("format-version mismatch in " + path.string());

    const size_t frame_elems = static_cast<size_t>(hdr.h) * hdr.w;
    const size_t expect = sizeof(hdr) + static_cast<size_t>(hdr.t) * frame_elems * sizeof(float);
    if (payload_len != expect)
        throw std::runtime_error("payload size mismatch in " + path.string());

    SampleSequence seq;
    const char* p = bytes.data() + sizeof(hdr);
    for (int t = 0; t < hdr.t; ++t) {
        Field2D f(hdr.h, hdr.w, hdr.pixel_size_mm);
        std::memcpy(f.values.data(), p, frame_elems * sizeof(float));
        p += frame_elems * sizeof(float);
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

}  // namespace

void save_library(const DigitalLibrary& lib, const std::string& dir) {
    lib.validate();
    fs::create_directories(dir);
    for (size_t i = 0; i < lib.samples.size(); ++i)
        save_sequence_blob(lib.samples[i], fs::path(dir) / sample_filename(i));

    nlohmann::json j = lib.manifest.to_json();
    j["format_version"] = kLibraryVersion;
    j["n_samples"] = lib.samples.size();
    if (!lib.samples.empty()) {
        const SampleSequence& s0 = lib.samples.front();
        j["frames_per_sequence"] = s0.frames.size();
        j["frame_height"] = s0.frames.front().height;
        j["frame_width"] = s0.frames.front().width;
        j["pixel_size_mm"] = s0.frames.front().pixel_size_mm;
        j["dt_label"] = s0.dt_label;
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
}

DigitalLibrary load_library(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("no manifest.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format_version", 0) != kLibraryVersion)
        throw std::runtime_error("format-version mismatch in " + dir);

    DigitalLibrary lib;
    lib.manifest = LibraryManifest::from_json(j);
    const size_t n = j.at("n_samples").get<size_t>();
    const std::string dt_label = j.value("dt_label", "");
    for (size_t i = 0; i < n; ++i) {
        SampleSequence s = load_sequence_blob(fs::path(dir) / sample_filename(i));
        s.dt_label = dt_label;
        lib.samples.push_back(std::move(s));
    }
    lib.validate();
    return lib;
}

std::uint32_t library_payload_crc(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("no manifest.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(in);
    const size_t n = j.at("n_samples").get<size_t>();
    uLong crc = ::crc32(0L, Z_NULL, 0);
    for (size_t i = 0; i < n; ++i) {
        std::vector<char> bytes = read_all(fs::path(dir) / sample_filename(i));
        crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                      static_cast<uInt>(bytes.size()));
    }
    return static_cast<std::uint32_t>(crc);
}

std::string manifest_content_key(const LibraryManifest& m) {
    nlohmann::json j = m.to_json();
    j.erase("created");
    return j.dump();
}

std::string iso8601_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace microevo
