#pragma once

#include <cstdint>
#include <string>

#include "microevo/field.hpp"

namespace microevo {

// On-disk layout: one directory per library.
//   manifest.json           manifest + frame geometry + payload CRCs
//   sample_NNNN.bin         one raw blob per sequence
// Blob: 16-byte header (magic 'MELB', version u16, T u16, H u16, W u16,
// pixel_size f32), T*H*W little-endian f32 values, CRC32 footer over
// header+payload.
inline constexpr std::uint32_t kLibraryMagic = 0x424C454DU;  // "MELB"
inline constexpr std::uint16_t kLibraryVersion = 1;

void save_library(const DigitalLibrary& lib, const std::string& dir);
DigitalLibrary load_library(const std::string& dir);

// CRC32 over every sample blob in index order; manifest-independent
// fingerprint of the array payloads.
std::uint32_t library_payload_crc(const std::string& dir);

// Manifest with the creation timestamp removed, serialized canonically;
// comparing these checks content identity across rebuild times.
std::string manifest_content_key(const LibraryManifest& m);

std::string iso8601_now();

}  // namespace microevo
