#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "microevo/field.hpp"
#include "microevo/layers.hpp"
#include "microevo/spiking.hpp"
#include "microevo/tensor.hpp"

namespace microevo::nn {

enum class ModelFamily { base_rnn, base_lstm, base_snn, conv_lstm, stc_lif };

ModelFamily family_from_string(const std::string& name);
std::string family_name(ModelFamily f);
bool is_spiking(ModelFamily f);

struct ModelSpec {
    ModelFamily family = ModelFamily::base_snn;
    int height = 0;
    int width = 0;
    int in_len = 1;
    int out_len = 1;
    int enc_ch1 = 16;
    int enc_ch2 = 4;
    int kernel = 3;
    int hidden1 = 128;        // width of the first recurrent layer (ANN families)
    int ann_stride = 2;
    int snn_stride = 1;
    // Dilation of the inner conv pair (enc2/dec1) in spiking families; >1
    // widens the receptive field at constant parameter count and feature-map
    // size. Requires snn_stride == 1.
    int snn_dilation = 5;
    LifParams<float> lif;
    // Scale applied to the input frame before the first spiking conv; with
    // unit drive the fresh network sits below the surrogate window and is
    // untrainable. Ignored by the ANN families.
    float input_gain = 6.0f;
    // Untrainable gain on the spike currents feeding enc2/dec1 in spiking
    // families; sparse binary spike maps under Glorot kernels otherwise leave
    // the deeper membranes outside the surrogate's active band.
    float hidden_gain = 4.0f;
    std::uint64_t seed = 1;

    void validate() const;
};

// All five families in one struct; build_model fills only the members the
// family uses. Parameters are additionally registered by name in `params`
// (fixed order), which is what training, counting, and checkpoints consume.
struct Model {
    ModelSpec spec;

    // ANN (base_rnn / base_lstm): 3D conv encoder, recurrent core, 2D deconv decoder.
    Conv3dLayer<float> enc3d_1, enc3d_2;
    RnnCell<float> rnn1, rnn2;
    LstmCell<float> lstm1, lstm2;
    Deconv2dLayer<float> dec1, dec2;

    // Spiking / conv_lstm: 2D conv encoder (decoder shared via dec1/dec2).
    Conv2dLayer<float> enc1, enc2;
    ConvLstmCell<float> clstm1, clstm2;
    StcGates<float> gates1, gates2, gates3;

    // Encoded spatial dims after the two encoder convs.
    int enc_h = 0, enc_w = 0;

    std::vector<std::pair<std::string, Tensor<float>>> params;

    std::vector<Tensor<float>> param_tensors() const;
    size_t param_count() const;
    void zero_grad();
};

Model build_model(const ModelSpec& spec);

// in_frames: in_len tensors of shape (B, 1, H, W). Returns out_len predicted
// frames of the same shape, differentiable end to end. Hidden/membrane state
// is zero-initialized per call; raw predictions are fed back for steps beyond
// the input window. Spiking families emit through a linear output layer, ANN
// families through a sigmoid.
std::vector<Tensor<float>> forward_sequence(const Model& model,
                                            const std::vector<Tensor<float>>& in_frames,
                                            int out_len = -1);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    float lr = 1e-3f;
    std::uint64_t seed = 1;
    float divergence_threshold = 1e6f;  // abort when loss exceeds this or goes non-finite
    int max_batches_per_epoch = -1;     // cap for smoke runs; -1 = full epoch
    std::string checkpoint_dir;         // when set, periodic + final checkpoints land here
    int checkpoint_every = 0;           // epochs between checkpoints; 0 = final only
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean batch loss per completed epoch
    long steps = 0;
    bool diverged = false;
};

TrainResult train(Model& model, const WindowedDataset& data, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Seed the model with `seed` frames, then predict `horizon` further frames,
// re-feeding its own outputs. threshold_refeed binarizes fed-back frames at
// 0.5 (intended for spiking families on binary data).
std::vector<Field2D> rollout_autoregressive(const Model& model,
                                            const std::vector<Field2D>& seed,
                                            int horizon, bool threshold_refeed);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace microevo::nn
