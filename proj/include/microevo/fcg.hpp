#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "microevo/field.hpp"

namespace microevo {

struct PlateSpec {
    double width_mm = 10.0;
    double height_mm = 20.0;
    double initial_crack_mm = 1.0;
    int n_segments = 7;
    double pixel_size_mm = 0.075;
    // Raster region of interest: full width, a band of raster_ny pixels
    // vertically centered on the initial crack height.
    int raster_nx = 132;
    int raster_ny = 96;

    void validate() const;
    nlohmann::json to_json() const;
};

struct LoadSpec {
    double tension_mean_mpa = 200.0;
    double shear_mean_mpa = 100.0;
    double std_mpa = 50.0;
    double stress_ratio = 0.0;  // R = min/max within a cycle

    void validate() const;
    nlohmann::json to_json() const;
};

struct MaterialParams {
    double paris_c = 9.7e-12;
    double paris_m = 3.0;
    std::string sif_units = "MPa*sqrt(m)";

    void validate() const;
    nlohmann::json to_json() const;
};

struct SifPair {
    double k1 = 0.0;  // mode I, MPa*sqrt(m)
    double k2 = 0.0;  // mode II
};

struct CrackPath {
    std::vector<std::pair<double, double>> vertices;  // tip (x, y) in mm
    std::vector<int> segment_frames;   // vertex index at each recorded frame
    std::vector<double> cycle_counts;  // cycles consumed per growth increment
};

// Gaussian (tension, shear) draws; tension clamped to >= 1 MPa.
std::pair<double, double> sample_segment_loads(const LoadSpec& spec,
                                               std::mt19937_64& rng);

// Finite-width edge-crack handbook formulas on the projected length a:
//   K_I  = Y(a/W) * tension * sqrt(pi*a),  Y the standard quartic polynomial
//   K_II = 1.12 * shear * sqrt(pi*a)
// Lengths in mm are converted to m internally. Throws crack-too-long when
// a >= 0.95*W.
SifPair sif_edge_crack(double a_mm, const PlateSpec& plate, double tension_mpa,
                       double shear_mpa);

double edge_crack_geometry_factor(double a_over_w);

// Maximum shear stress criterion kink angle, signed opposite K_II.
double deflection_angle(const SifPair& sif);

// da = cycles * C * delta_K^m
double paris_increment(double delta_k, double cycles, const MaterialParams& mat);

struct GrowOptions {
    double step_mm = 0.05;  // geometric growth step per deflection update
};

// Advances the tip in step_mm increments along the MSC direction (measured
// from the +x axis), resampling loads at each segment-boundary crossing.
// Records the initial state plus n_segments crossings; the final crossing is
// the end of the valid LEFM range (0.95*W). Throws crack-escaped-band /
// crack-too-long when the path leaves the plate before the final segment.
CrackPath grow_crack(const PlateSpec& plate, const LoadSpec& loads,
                     const MaterialParams& mat, std::uint64_t seed,
                     const GrowOptions& opt = {});

// 1-pixel-per-column binary raster of the path up to recorded frame_index.
// Pixels whose y falls outside the band are skipped; *exited_band is set.
Field2D rasterize_path(const CrackPath& path, int frame_index,
                       const PlateSpec& plate, bool* exited_band = nullptr);

struct FcgBuildOptions {
    int n_samples = 908;
    std::uint64_t base_seed = 0;
    bool deterministic_timestamp = false;
};

DigitalLibrary build_fcg_library(const FcgBuildOptions& opt,
                                 const PlateSpec& plate, const LoadSpec& loads,
                                 const MaterialParams& mat,
                                 const GrowOptions& grow = {});

}  // namespace microevo
