#pragma once

#include <cstdint>

#include "microevo/field.hpp"

namespace microevo {

struct GrayScottParams {
    float d_u = 0.12f;
    float d_v = 0.08f;
    float feed = 0.02f;
    float kill = 0.05f;
    float dt = 1.0f;
    int grid_h = 200;
    int grid_w = 200;
    float pixel_size_mm = 1.0f;

    // Throws when the explicit-Euler stability bound
    // dt <= h^2 / (4*max(D_u, D_v)) is violated, or a rate is negative.
    void validate() const;

    nlohmann::json to_json() const;
};

struct GrayScottState {
    Field2D u;
    Field2D v;
    double t = 0.0;  // accumulated solver time
};

// Periodic 5-point Laplacian divided by pixel_spacing^2. Grid must be >= 3x3.
Field2D laplacian(const Field2D& field);

// One forward-Euler update of both species; throws on non-finite values with
// the offending step index in the message.
GrayScottState gs_step(const GrayScottState& state, const GrayScottParams& p);

// Advances in place for n steps (avoids per-step copies).
void gs_advance(GrayScottState& state, const GrayScottParams& p, int n_steps);

// Background u=1, v=0 with a seeded number (3..8) of square patches
// (side 10..20 px) set to u=0.5, v=0.25 plus +-0.02 uniform noise on the
// patch cells. Deterministic given seed.
GrayScottState random_initial_condition(int grid_h, int grid_w,
                                        float pixel_size_mm, std::uint64_t seed);

struct TuringBuildOptions {
    int n_sequences = 15;
    int frames_per_sequence = 68;
    // At the default reaction rates the patterns are a transient: structure
    // grows from the seeded patches, peaks within ~1500 steps, and decays back
    // to the uniform state by roughly step 2500-4500 depending on the seed.
    // The defaults therefore record from step 0 with a short stride so the 68
    // frames cover the live window instead of the dead steady state.
    int burn_in_steps = 0;
    int record_stride = 30;
    std::uint64_t base_seed = 0;
    bool deterministic_timestamp = false;
};

// Per sequence: random IC (seed = base_seed + index), burn-in, then one frame
// every record_stride steps. Only the u field is recorded.
DigitalLibrary build_turing_library(const TuringBuildOptions& opt,
                                    const GrayScottParams& p);

}  // namespace microevo
