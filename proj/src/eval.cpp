#include "microevo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace microevo::eval {

double mae(const Field2D& pred, const Field2D& truth) {
    if (pred.height != truth.height || pred.width != truth.width)
        throw std::invalid_argument("mae: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i)
        acc += std::abs(static_cast<double>(pred.values[i]) - truth.values[i]);
    return acc / static_cast<double>(pred.values.size());
}

Roller model_roller(const nn::Model& model, bool threshold_refeed) {
    return [&model, threshold_refeed](const std::vector<Field2D>& seed, int horizon) {
        return nn::rollout_autoregressive(model, seed, horizon, threshold_refeed);
    };
}

ErrorCurve error_curve(const Roller& roller,
                       const std::vector<SampleSequence>& test_set, int in_len,
                       int horizon) {
    if (test_set.empty()) throw std::invalid_argument("error_curve: empty test set");
    if (in_len < 1 || horizon < 1)
        throw std::invalid_argument("error_curve: in_len and horizon must be positive");
    for (const auto& seq : test_set)
        if (static_cast<int>(seq.frames.size()) < in_len + horizon)
            throw std::invalid_argument("error_curve: horizon exceeds available truth frames");

    ErrorCurve curve;
    curve.per_step.assign(horizon, 0.0);
    for (const auto& seq : test_set) {
        std::vector<Field2D> seed(seq.frames.begin(), seq.frames.begin() + in_len);
        const auto preds = roller(seed, horizon);
        if (static_cast<int>(preds.size()) != horizon)
            throw std::runtime_error("error_curve: roller returned wrong frame count");
        for (int t = 0; t < horizon; ++t)
            curve.per_step[t] += mae(preds[t], seq.frames[in_len + t]);
    }
    double acc = 0.0;
    for (double& v : curve.per_step) {
        v /= static_cast<double>(test_set.size());
        acc += v;
    }
    curve.cumulative = acc / horizon;
    return curve;
}

std::size_t memory_pixel(int dtype_bytes, int nx, int ny) {
    if (dtype_bytes < 1 || nx < 1 || ny < 1)
        throw std::invalid_argument("memory_pixel: inputs must be positive");
    return static_cast<std::size_t>(dtype_bytes) * nx * ny;
}

std::size_t memory_vector(int n_nodes, int dtype_bytes) {
    if (dtype_bytes < 1 || n_nodes < 1)
        throw std::invalid_argument("memory_vector: inputs must be positive");
    return 2 * static_cast<std::size_t>(dtype_bytes) * n_nodes + 24;
}

std::size_t memory_model(int dtype_bytes, std::size_t n_params) {
    if (dtype_bytes < 1) throw std::invalid_argument("memory_model: bad dtype size");
    return static_cast<std::size_t>(dtype_bytes) * n_params;
}

int interface_thickness(const Field2D& field, float threshold) {
    if (field.values.empty()) throw std::invalid_argument("interface_thickness: empty field");
    std::vector<int> runs;
    for (int c = 0; c < field.width; ++c) {
        int best = 0, run = 0;
        for (int r = 0; r < field.height; ++r) {
            if (field.at(r, c) >= threshold) {
                ++run;
                best = std::max(best, run);
            } else {
                run = 0;
            }
        }
        if (best > 0) runs.push_back(best);
    }
    if (runs.empty()) return 0;
    std::sort(runs.begin(), runs.end());
    return runs[(runs.size() - 1) / 2];  // lower median
}

namespace {

constexpr int kBins = 101;

WeightHistogram histogram_of(const std::vector<const std::vector<float>*>& blocks) {
    WeightHistogram h;
    h.counts.assign(kBins, 0);
    double maxabs = 0.0, sum = 0.0;
    std::size_t n = 0;
    for (const auto* b : blocks)
        for (float w : *b) {
            maxabs = std::max(maxabs, std::abs(static_cast<double>(w)));
            sum += w;
            ++n;
        }
    h.n_weights = n;
    if (n == 0) return h;
    h.bin_min = -maxabs;
    h.bin_max = maxabs;
    const double mean = sum / n;
    double var = 0.0;
    for (const auto* b : blocks)
        for (float w : *b) {
            var += (w - mean) * (w - mean);
            int bin = maxabs == 0.0
                          ? kBins / 2
                          : static_cast<int>((w + maxabs) / (2 * maxabs) * kBins);
            h.counts[std::clamp(bin, 0, kBins - 1)]++;
        }
    h.variance = var / n;
    return h;
}

// Convolution kernels are the rank>=4 weight tensors in the registry.
std::vector<std::pair<std::string, const std::vector<float>*>> conv_weights(
    const nn::Model& model) {
    std::vector<std::pair<std::string, const std::vector<float>*>> out;
    for (const auto& [name, t] : model.params)
        if (t.shape().size() >= 4) out.emplace_back(name, &t.data());
    return out;
}

}  // namespace

WeightStats weight_statistics(const nn::Model& model) {
    WeightStats stats;
    std::vector<const std::vector<float>*> pooled;
    for (const auto& [name, data] : conv_weights(model)) {
        stats.per_layer.emplace_back(name, histogram_of({data}));
        pooled.push_back(data);
    }
    if (pooled.empty())
        throw std::invalid_argument("weight_statistics: model has no convolutional layers");
    stats.pooled = histogram_of(pooled);
    return stats;
}

ConnectivityReport connectivity_density(const nn::Model& model, double threshold) {
    const auto layers = conv_weights(model);
    if (layers.empty())
        throw std::invalid_argument("connectivity_density: model has no convolutional layers");
    ConnectivityReport rep;
    std::size_t linked = 0, total = 0;
    for (const auto& [name, data] : layers) {
        std::size_t l = 0;
        for (float w : *data)
            if (std::abs(static_cast<double>(w)) >= threshold) ++l;
        rep.per_layer.emplace_back(name, static_cast<double>(l) / data->size());
        linked += l;
        total += data->size();
    }
    rep.pooled = static_cast<double>(linked) / static_cast<double>(total);
    return rep;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json jw = nlohmann::json::array();
    for (const auto& [name, h] : weights.per_layer)
        jw.push_back({{"layer", name},
                      {"bin_min", h.bin_min},
                      {"bin_max", h.bin_max},
                      {"counts", h.counts},
                      {"variance", h.variance},
                      {"n_weights", h.n_weights}});
    nlohmann::json jc = nlohmann::json::array();
    for (const auto& [name, d] : connectivity.per_layer)
        jc.push_back({{"layer", name}, {"density", d}});
    return {{"mae_per_step", curve.per_step},
            {"mae_cumulative", curve.cumulative},
            {"n_params", n_params},
            {"memory_bytes",
             {{"pixel", m_pixel}, {"vector", m_vector}, {"model", m_model}}},
            {"interface_thickness_px", interface_px},
            {"weight_statistics",
             {{"per_layer", jw},
              {"pooled",
               {{"bin_min", weights.pooled.bin_min},
                {"bin_max", weights.pooled.bin_max},
                {"counts", weights.pooled.counts},
                {"variance", weights.pooled.variance},
                {"n_weights", weights.pooled.n_weights}}}}},
            {"connectivity",
             {{"pooled", connectivity.pooled}, {"per_layer", jc}}}};
}

}  // namespace microevo::eval
