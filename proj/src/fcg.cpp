#include "microevo/fcg.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "microevo/library_io.hpp"

namespace microevo {

void PlateSpec::validate() const {
    if (width_mm <= 0 || height_mm <= 0 || pixel_size_mm <= 0)
        throw std::invalid_argument("PlateSpec: non-positive dimension");
    if (initial_crack_mm <= 0 || initial_crack_mm >= width_mm)
        throw std::invalid_argument("PlateSpec: initial crack must lie inside the width");
    if (n_segments < 1) throw std::invalid_argument("PlateSpec: n_segments must be >= 1");
    if (raster_nx < 1 || raster_ny < 1)
        throw std::invalid_argument("PlateSpec: raster dimensions must be positive");
}

nlohmann::json PlateSpec::to_json() const {
    return {{"width_mm", width_mm},     {"height_mm", height_mm},
            {"initial_crack_mm", initial_crack_mm},
            {"n_segments", n_segments}, {"pixel_size_mm", pixel_size_mm},
            {"raster_nx", raster_nx},   {"raster_ny", raster_ny}};
}

void LoadSpec::validate() const {
    if (tension_mean_mpa <= 0 || shear_mean_mpa < 0)
        throw std::invalid_argument("LoadSpec: means must be positive");
    if (std_mpa < 0) throw std::invalid_argument("LoadSpec: std must be >= 0");
}

nlohmann::json LoadSpec::to_json() const {
    return {{"tension_mean_mpa", tension_mean_mpa},
            {"shear_mean_mpa", shear_mean_mpa},
            {"std_mpa", std_mpa},
            {"stress_ratio", stress_ratio}};
}

void MaterialParams::validate() const {
    if (paris_c <= 0 || paris_m <= 0)
        throw std::invalid_argument("MaterialParams: C and m must be > 0");
}

nlohmann::json MaterialParams::to_json() const {
    return {{"C", paris_c}, {"m", paris_m}, {"sif_units", sif_units}};
}

std::pair<double, double> sample_segment_loads(const LoadSpec& spec,
                                               std::mt19937_64& rng) {
    std::normal_distribution<double> tension(spec.tension_mean_mpa, spec.std_mpa);
    std::normal_distribution<double> shear(spec.shear_mean_mpa, spec.std_mpa);
    double t = spec.std_mpa == 0.0 ? spec.tension_mean_mpa : tension(rng);
    double s = spec.std_mpa == 0.0 ? spec.shear_mean_mpa : shear(rng);
    if (t < 1.0) t = 1.0;  // compression excluded
    return {t, s};
}

double edge_crack_geometry_factor(double r) {
    return 1.12 - 0.231 * r + 10.55 * r * r - 21.72 * r * r * r +
           30.39 * r * r * r * r;
}

SifPair sif_edge_crack(double a_mm, const PlateSpec& plate, double tension_mpa,
                       double shear_mpa) {
    if (a_mm <= 0.0)
        throw std::invalid_argument("sif_edge_crack: crack length must be > 0");
    if (a_mm >= 0.95 * plate.width_mm)
        throw std::runtime_error("crack-too-long: a >= 0.95*W");
    const double a_m = a_mm * 1e-3;
    const double root = std::sqrt(std::numbers::pi * a_m);
    SifPair sif;
    sif.k1 = edge_crack_geometry_factor(a_mm / plate.width_mm) * tension_mpa * root;
    sif.k2 = 1.12 * shear_mpa * root;
    return sif;
}

double deflection_angle(const SifPair& sif) {
    if (sif.k1 == 0.0 && sif.k2 == 0.0)
        throw std::invalid_argument("deflection_angle: both SIFs are zero");
    const double k1sq = sif.k1 * sif.k1;
    const double k2sq = sif.k2 * sif.k2;
    double arg = (3.0 * k2sq + std::sqrt(k1sq * k1sq + 8.0 * k1sq * k2sq)) /
                 (k1sq + 9.0 * k2sq);
    arg = std::clamp(arg, -1.0, 1.0);
    const double theta = std::acos(arg);
    return sif.k2 > 0.0 ? -theta : theta;
}

double paris_increment(double delta_k, double cycles, const MaterialParams& mat) {
    if (delta_k <= 0.0)
        throw std::invalid_argument("paris_increment: delta_K must be > 0");
    if (cycles < 1.0)
        throw std::invalid_argument("paris_increment: cycles must be >= 1");
    return cycles * mat.paris_c * std::pow(delta_k, mat.paris_m);
}

CrackPath grow_crack(const PlateSpec& plate, const LoadSpec& loads,
                     const MaterialParams& mat, std::uint64_t seed,
                     const GrowOptions& opt) {
    plate.validate();
    loads.validate();
    mat.validate();

    const double w = plate.width_mm;
    const double a_max = 0.95 * w;
    // Interior boundaries at k*W/Ns; the last recorded crossing is the end of
    // the valid LEFM range, which substitutes for the unreachable x = W edge.
    std::vector<double> boundaries;
    for (int k = 1; k < plate.n_segments; ++k)
        boundaries.push_back(w * k / plate.n_segments);
    boundaries.push_back(a_max);

    std::mt19937_64 rng(seed);
    CrackPath path;
    path.vertices.emplace_back(plate.initial_crack_mm, plate.height_mm / 2.0);
    path.segment_frames.push_back(0);

    size_t next_boundary = 0;
    while (next_boundary < boundaries.size() &&
           boundaries[next_boundary] <= plate.initial_crack_mm)
        ++next_boundary;

    auto [tension, shear] = sample_segment_loads(loads, rng);
    while (next_boundary < boundaries.size()) {
        const auto [x, y] = path.vertices.back();
        if (x >= a_max) break;
        const SifPair sif = sif_edge_crack(x, plate, tension, shear);
        const double theta = deflection_angle(sif);
        const double nx = x + opt.step_mm * std::cos(theta);
        const double ny = y + opt.step_mm * std::sin(theta);
        if (ny <= 0.0 || ny >= plate.height_mm)
            throw std::runtime_error("crack-escaped-plate: tip left the plate");
        // Cycle bookkeeping: invert Eq. da/dN at the mode-I SIF range.
        const double delta_k = (1.0 - loads.stress_ratio) * sif.k1;
        path.cycle_counts.push_back((opt.step_mm * 1e-3) /
                                    (mat.paris_c * std::pow(delta_k, mat.paris_m)));
        path.vertices.emplace_back(nx, ny);

        while (next_boundary < boundaries.size() && nx >= boundaries[next_boundary]) {
            path.segment_frames.push_back(static_cast<int>(path.vertices.size()) - 1);
            ++next_boundary;
            if (next_boundary < boundaries.size()) {
                auto drawn = sample_segment_loads(loads, rng);
                tension = drawn.first;
                shear = drawn.second;
            }
        }
    }

    if (static_cast<int>(path.segment_frames.size()) != plate.n_segments + 1)
        throw std::runtime_error("crack-too-long: simulation ended before the final segment");
    return path;
}

Field2D rasterize_path(const CrackPath& path, int frame_index,
                       const PlateSpec& plate, bool* exited_band) {
    if (frame_index < 0 || frame_index >= static_cast<int>(path.segment_frames.size()))
        throw std::invalid_argument("rasterize_path: frame_index out of range");
    if (exited_band) *exited_band = false;

    const double px = plate.pixel_size_mm;
    const double band_h = plate.raster_ny * px;
    const double y0 = plate.height_mm / 2.0 - band_h / 2.0;
    Field2D out(plate.raster_ny, plate.raster_nx, static_cast<float>(px));

    // The path is a function y(x) (x strictly increasing); one pixel per
    // column keeps every raster exactly one pixel thick and makes later
    // frames supersets of earlier ones.
    const int tip_vertex = path.segment_frames[frame_index];
    const double tip_x = path.vertices[tip_vertex].first;

    // Piecewise-linear y(x) with a virtual vertex at the plate edge.
    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, plate.height_mm / 2.0);
    pts.insert(pts.end(), path.vertices.begin(),
               path.vertices.begin() + tip_vertex + 1);

    size_t seg = 0;
    for (int c = 0; c < plate.raster_nx; ++c) {
        const double xc = (c + 0.5) * px;
        if (c * px >= tip_x) break;
        const double xq = std::min(xc, tip_x);
        while (seg + 2 < pts.size() && pts[seg + 1].first < xq) ++seg;
        const auto [xa, ya] = pts[seg];
        const auto [xb, yb] = pts[seg + 1];
        const double t = xb > xa ? std::clamp((xq - xa) / (xb - xa), 0.0, 1.0) : 0.0;
        const double y = ya + t * (yb - ya);
        const int row = static_cast<int>(std::floor((y - y0) / px));
        if (row < 0 || row >= plate.raster_ny) {
            if (exited_band) *exited_band = true;
            continue;
        }
        out.at(row, c) = 1.0f;
    }
    return out;
}

DigitalLibrary build_fcg_library(const FcgBuildOptions& opt,
                                 const PlateSpec& plate, const LoadSpec& loads,
                                 const MaterialParams& mat,
                                 const GrowOptions& grow) {
    if (opt.n_samples < 1)
        throw std::invalid_argument("build_fcg_library: n_samples must be >= 1");

    DigitalLibrary lib;
    lib.manifest.generator = "fcg-paris-msc";
    lib.manifest.seed = opt.base_seed;
    lib.manifest.created = opt.deterministic_timestamp ? "1970-01-01T00:00:00Z"
                                                       : iso8601_now();
    lib.manifest.params["plate"] = plate.to_json();
    lib.manifest.params["loads"] = loads.to_json();
    lib.manifest.params["material"] = mat.to_json();
    lib.manifest.params["step_mm"] = grow.step_mm;

    lib.samples.resize(opt.n_samples);
    std::vector<nlohmann::json> sample_meta(opt.n_samples);
    bool exhausted = false;

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < opt.n_samples; ++i) {
        // Failed paths retry on a per-sample seed lane so the result does not
        // depend on generation order.
        CrackPath path;
        std::uint64_t used_seed = 0;
        int retries = 0;
        bool ok = false;
        for (; retries <= 1000; ++retries) {
            used_seed = opt.base_seed + static_cast<std::uint64_t>(i) +
                        static_cast<std::uint64_t>(retries) *
                            static_cast<std::uint64_t>(opt.n_samples);
            try {
                path = grow_crack(plate, loads, mat, used_seed, grow);
                ok = true;
                break;
            } catch (const std::runtime_error&) {
            }
        }
        if (!ok) {
#pragma omp atomic write
            exhausted = true;
            continue;
        }

        SampleSequence seq;
        seq.dt_label = "segment crossings";
        bool exited = false;
        for (int f = 0; f < plate.n_segments + 1; ++f) {
            bool frame_exited = false;
            seq.frames.push_back(rasterize_path(path, f, plate, &frame_exited));
            exited = exited || frame_exited;
        }
        lib.samples[i] = std::move(seq);

        nlohmann::json meta;
        meta["seed"] = used_seed;
        meta["retries"] = retries;
        meta["exited_band"] = exited;
        nlohmann::json verts = nlohmann::json::array();
        for (const auto& [x, y] : path.vertices) verts.push_back({x, y});
        meta["vertices"] = std::move(verts);
        meta["segment_frames"] = path.segment_frames;
        // Per-frame cycle totals; fine-grained counts stay in memory only.
        nlohmann::json cyc = nlohmann::json::array();
        for (size_t f = 1; f < path.segment_frames.size(); ++f) {
            double total = 0.0;
            for (int s = path.segment_frames[f - 1]; s < path.segment_frames[f]; ++s)
                total += path.cycle_counts[s];
            cyc.push_back(total);
        }
        meta["cycles_per_frame"] = std::move(cyc);
        sample_meta[i] = std::move(meta);
    }

    if (exhausted)
        throw std::runtime_error("build_fcg_library: a sample never produced a valid path");
    lib.manifest.extra["samples"] = sample_meta;
    return lib;
}

}  // namespace microevo
