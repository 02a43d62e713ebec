#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "microevo/field.hpp"
#include "microevo/models.hpp"

namespace microevo::eval {

// Eq. 8: mean absolute error over the grid.
double mae(const Field2D& pred, const Field2D& truth);

// Anything that can continue a sequence: takes seed frames, returns `horizon`
// predicted frames. Decouples the error curve from the model type so stubs
// (ground truth, constant frame) can stand in during tests.
using Roller =
    std::function<std::vector<Field2D>(const std::vector<Field2D>& seed, int horizon)>;

Roller model_roller(const nn::Model& model, bool threshold_refeed);

struct ErrorCurve {
    std::vector<double> per_step;  // MAE averaged over sequences, per rollout step
    double cumulative = 0.0;       // mean of per_step
};

// Each test sequence is seeded with its first in_len frames; predictions are
// compared against the following `horizon` truth frames.
ErrorCurve error_curve(const Roller& roller,
                       const std::vector<SampleSequence>& test_set, int in_len,
                       int horizon);

// §3.1 memory costs, in bytes.
std::size_t memory_pixel(int dtype_bytes, int nx, int ny);
// 2 coordinates per node plus the 2x3 affine transformation matrix (24 bytes).
std::size_t memory_vector(int n_nodes, int dtype_bytes = 4);
std::size_t memory_model(int dtype_bytes, std::size_t n_params);

// Median over columns (that contain any supra-threshold pixel) of the longest
// contiguous supra-threshold run in the column; 0 when nothing crosses.
int interface_thickness(const Field2D& field, float threshold = 0.5f);

struct WeightHistogram {
    double bin_min = 0.0;         // = -max|w|
    double bin_max = 0.0;         // = +max|w|
    std::vector<long> counts;     // 101 bins
    double variance = 0.0;        // population variance
    std::size_t n_weights = 0;
};

struct WeightStats {
    std::vector<std::pair<std::string, WeightHistogram>> per_layer;
    WeightHistogram pooled;
};

// Convolution-kernel weights only (tensor rank >= 4); biases and dense/gate
// vectors are excluded, matching the paper's per-convolutional-layer framing.
WeightStats weight_statistics(const nn::Model& model);

struct ConnectivityReport {
    double pooled = 0.0;  // fraction of conv weights with |w| >= threshold
    std::vector<std::pair<std::string, double>> per_layer;
};

ConnectivityReport connectivity_density(const nn::Model& model,
                                        double threshold = 0.001);

struct EvalReport {
    ErrorCurve curve;
    std::size_t n_params = 0;
    std::size_t m_pixel = 0;
    std::size_t m_vector = 0;
    std::size_t m_model = 0;
    int interface_px = 0;
    WeightStats weights;
    ConnectivityReport connectivity;

    nlohmann::json to_json() const;
};

}  // namespace microevo::eval
