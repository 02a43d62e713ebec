#include "microevo/models.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <deque>
#include <numeric>
#include <fstream>
#include <ostream>
#include <random>
#include <stdexcept>

namespace microevo::nn {

ModelFamily family_from_string(const std::string& name) {
    if (name == "base_rnn") return ModelFamily::base_rnn;
    if (name == "base_lstm") return ModelFamily::base_lstm;
    if (name == "base_snn") return ModelFamily::base_snn;
    if (name == "conv_lstm") return ModelFamily::conv_lstm;
    if (name == "stc_lif") return ModelFamily::stc_lif;
    throw std::invalid_argument("unknown model family: " + name);
}

std::string family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::base_rnn: return "base_rnn";
        case ModelFamily::base_lstm: return "base_lstm";
        case ModelFamily::base_snn: return "base_snn";
        case ModelFamily::conv_lstm: return "conv_lstm";
        case ModelFamily::stc_lif: return "stc_lif";
    }
    throw std::logic_error("family_name: bad enum");
}

bool is_spiking(ModelFamily f) {
    return f == ModelFamily::base_snn || f == ModelFamily::stc_lif;
}

void ModelSpec::validate() const {
    if (height < 3 || width < 3) throw std::invalid_argument("ModelSpec: grid too small");
    if (in_len < 1 || out_len < 1)
        throw std::invalid_argument("ModelSpec: in_len/out_len must be positive");
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("ModelSpec: kernel must be odd and positive");
    if (enc_ch1 < 1 || enc_ch2 < 1 || hidden1 < 1)
        throw std::invalid_argument("ModelSpec: channel/hidden sizes must be positive");
    if (ann_stride < 1 || snn_stride < 1)
        throw std::invalid_argument("ModelSpec: strides must be positive");
    if (snn_dilation < 1 || (snn_dilation > 1 && snn_stride != 1))
        throw std::invalid_argument("ModelSpec: snn_dilation needs snn_stride == 1");
    if (!(input_gain > 0.0f) || !(hidden_gain > 0.0f))
        throw std::invalid_argument("ModelSpec: gains must be positive");
}

namespace {

int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// output_pad that makes a stride-s deconv land exactly on `target`.
int deconv_outpad(int in, int target, int k, int s, int p) {
    const int base = (in - 1) * s - 2 * p + k;
    const int op = target - base;
    if (op < 0 || op >= s)
        throw std::invalid_argument("model: grid size incompatible with strided decoder");
    return op;
}

}  // namespace

std::vector<Tensor<float>> Model::param_tensors() const {
    std::vector<Tensor<float>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

size_t Model::param_count() const {
    size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

void Model::zero_grad() {
    for (auto& [name, t] : params) t.zero_grad();
}

Model build_model(const ModelSpec& spec) {
    spec.validate();
    Model m;
    m.spec = spec;
    std::mt19937_64 rng(spec.seed);
    const int k = spec.kernel, pad = k / 2;
    auto reg = [&m](const std::string& name, const Tensor<float>& t) {
        m.params.emplace_back(name, t);
    };

    const bool ann = spec.family == ModelFamily::base_rnn ||
                     spec.family == ModelFamily::base_lstm;
    const int stride = ann || spec.family == ModelFamily::conv_lstm ? spec.ann_stride
                                                                    : spec.snn_stride;
    const int h1 = conv_out_dim(spec.height, k, stride, pad);
    const int w1 = conv_out_dim(spec.width, k, stride, pad);
    const int h2 = conv_out_dim(h1, k, stride, pad);
    const int w2 = conv_out_dim(w1, k, stride, pad);
    if (h2 < 1 || w2 < 1) throw std::invalid_argument("model: encoder collapses the grid");
    m.enc_h = h2;
    m.enc_w = w2;
    const int op1 = deconv_outpad(h2, h1, k, stride, pad);
    if (op1 != deconv_outpad(w2, w1, k, stride, pad))
        throw std::invalid_argument("model: height/width need different output padding");
    const int op2 = deconv_outpad(h1, spec.height, k, stride, pad);
    if (op2 != deconv_outpad(w1, spec.width, k, stride, pad))
        throw std::invalid_argument("model: height/width need different output padding");

    switch (spec.family) {
        case ModelFamily::base_rnn:
        case ModelFamily::base_lstm: {
            m.enc3d_1 = Conv3dLayer<float>::create(1, spec.enc_ch1, k, k, 1, stride,
                                                   pad, pad, rng);
            m.enc3d_2 = Conv3dLayer<float>::create(spec.enc_ch1, spec.enc_ch2, k, k, 1,
                                                   stride, pad, pad, rng);
            const int flat = spec.enc_ch2 * h2 * w2;
            if (spec.family == ModelFamily::base_rnn) {
                m.rnn1 = RnnCell<float>::create(flat, spec.hidden1, rng);
                m.rnn2 = RnnCell<float>::create(spec.hidden1, flat, rng);
            } else {
                m.lstm1 = LstmCell<float>::create(flat, spec.hidden1, rng);
                m.lstm2 = LstmCell<float>::create(spec.hidden1, flat, rng);
            }
            m.dec1 = Deconv2dLayer<float>::create(spec.enc_ch2, spec.enc_ch1, k, stride,
                                                  pad, op1, rng);
            m.dec2 = Deconv2dLayer<float>::create(spec.enc_ch1, 1, k, stride, pad, op2, rng);
            reg("enc3d_1.w", m.enc3d_1.w);
            reg("enc3d_1.b", m.enc3d_1.b);
            reg("enc3d_2.w", m.enc3d_2.w);
            reg("enc3d_2.b", m.enc3d_2.b);
            if (spec.family == ModelFamily::base_rnn) {
                reg("rnn1.w_x", m.rnn1.w_x);
                reg("rnn1.w_h", m.rnn1.w_h);
                reg("rnn1.b", m.rnn1.b);
                reg("rnn2.w_x", m.rnn2.w_x);
                reg("rnn2.w_h", m.rnn2.w_h);
                reg("rnn2.b", m.rnn2.b);
            } else {
                reg("lstm1.w_x", m.lstm1.w_x);
                reg("lstm1.w_h", m.lstm1.w_h);
                reg("lstm1.b", m.lstm1.b);
                reg("lstm2.w_x", m.lstm2.w_x);
                reg("lstm2.w_h", m.lstm2.w_h);
                reg("lstm2.b", m.lstm2.b);
            }
            break;
        }
        case ModelFamily::base_snn:
        case ModelFamily::stc_lif: {
            m.enc1 = Conv2dLayer<float>::create(1, spec.enc_ch1, k, stride, pad, rng);
            m.enc2 = Conv2dLayer<float>::create(spec.enc_ch1, spec.enc_ch2, k, stride,
                                                pad, rng);
            m.dec1 = Deconv2dLayer<float>::create(spec.enc_ch2, spec.enc_ch1, k, stride,
                                                  pad, op1, rng);
            m.dec2 = Deconv2dLayer<float>::create(spec.enc_ch1, 1, k, stride, pad, op2, rng);
            if (spec.snn_dilation > 1) {
                // Same-size dilated middle pair: widens the receptive field
                // without adding parameters or changing feature-map sizes.
                m.enc2.dilation = spec.snn_dilation;
                m.enc2.pad = spec.snn_dilation * (k / 2);
                m.dec1.dilation = spec.snn_dilation;
                m.dec1.pad = spec.snn_dilation * (k / 2);
            }
            reg("enc1.w", m.enc1.w);
            reg("enc1.b", m.enc1.b);
            reg("enc2.w", m.enc2.w);
            reg("enc2.b", m.enc2.b);
            if (spec.family == ModelFamily::stc_lif) {
                m.gates1 = StcGates<float>::create(spec.enc_ch1, rng);
                m.gates2 = StcGates<float>::create(spec.enc_ch2, rng);
                m.gates3 = StcGates<float>::create(spec.enc_ch1, rng);
                int gi = 1;
                for (auto* g : {&m.gates1, &m.gates2, &m.gates3}) {
                    const std::string p = "gates" + std::to_string(gi++);
                    reg(p + ".a", g->a);
                    reg(p + ".c", g->c);
                    reg(p + ".b", g->b);
                    reg(p + ".w_s", g->w_s);
                }
            }
            break;
        }
        case ModelFamily::conv_lstm: {
            m.enc1 = Conv2dLayer<float>::create(1, spec.enc_ch1, k, stride, pad, rng);
            m.enc2 = Conv2dLayer<float>::create(spec.enc_ch1, spec.enc_ch2, k, stride,
                                                pad, rng);
            m.clstm1 = ConvLstmCell<float>::create(spec.enc_ch2, spec.enc_ch1, k, rng);
            m.clstm2 = ConvLstmCell<float>::create(spec.enc_ch1, spec.enc_ch2, k, rng);
            m.dec1 = Deconv2dLayer<float>::create(spec.enc_ch2, spec.enc_ch1, k, stride,
                                                  pad, op1, rng);
            m.dec2 = Deconv2dLayer<float>::create(spec.enc_ch1, 1, k, stride, pad, op2, rng);
            reg("enc1.w", m.enc1.w);
            reg("enc1.b", m.enc1.b);
            reg("enc2.w", m.enc2.w);
            reg("enc2.b", m.enc2.b);
            reg("clstm1.w_x", m.clstm1.w_x);
            reg("clstm1.w_h", m.clstm1.w_h);
            reg("clstm1.b", m.clstm1.b);
            reg("clstm2.w_x", m.clstm2.w_x);
            reg("clstm2.w_h", m.clstm2.w_h);
            reg("clstm2.b", m.clstm2.b);
            break;
        }
    }
    reg("dec1.w", m.dec1.w);
    reg("dec1.b", m.dec1.b);
    reg("dec2.w", m.dec2.w);
    reg("dec2.b", m.dec2.b);
    return m;
}

namespace {

using TensorF = Tensor<float>;

void check_frames(const Model& m, const std::vector<TensorF>& frames) {
    if (static_cast<int>(frames.size()) != m.spec.in_len)
        throw std::invalid_argument("forward_sequence: expected in_len frames");
    for (const auto& f : frames) {
        const auto& s = f.shape();
        if (s.size() != 4 || s[0] != frames[0].shape()[0] || s[1] != 1 ||
            s[2] != m.spec.height || s[3] != m.spec.width)
            throw std::invalid_argument("forward_sequence: frame shape mismatch");
    }
}

// ANN families: re-encode the trailing in_len window for every emitted frame.
std::vector<TensorF> forward_ann(const Model& m, const std::vector<TensorF>& in_frames,
                                 int out_len) {
    const auto& sp = m.spec;
    const int B = in_frames[0].shape()[0];
    const int flat = sp.enc_ch2 * m.enc_h * m.enc_w;
    std::deque<TensorF> window(in_frames.begin(), in_frames.end());
    std::vector<TensorF> outs;
    for (int step = 0; step < out_len; ++step) {
        std::vector<TensorF> slabs;
        for (const auto& f : window)
            slabs.push_back(reshape(f, {B, 1, 1, sp.height, sp.width}));
        TensorF clip = concat(slabs, 2);  // (B, 1, T, H, W)
        TensorF e1 = relu(m.enc3d_1.forward(clip));
        TensorF e2 = relu(m.enc3d_2.forward(e1));  // (B, C2, T, h2, w2)
        TensorF h1 = TensorF::zeros({B, sp.hidden1});
        TensorF h2 = TensorF::zeros({B, flat});
        TensorF c1, c2;
        if (sp.family == ModelFamily::base_lstm) {
            c1 = TensorF::zeros({B, sp.hidden1});
            c2 = TensorF::zeros({B, flat});
        }
        for (int t = 0; t < sp.in_len; ++t) {
            TensorF xt = reshape(narrow(e2, 2, t, 1), {B, flat});
            if (sp.family == ModelFamily::base_rnn) {
                h1 = rnn_cell_step(xt, h1, m.rnn1);
                h2 = rnn_cell_step(h1, h2, m.rnn2);
            } else {
                std::tie(h1, c1) = lstm_cell_step(xt, h1, c1, m.lstm1);
                std::tie(h2, c2) = lstm_cell_step(h1, h2, c2, m.lstm2);
            }
        }
        TensorF z = reshape(h2, {B, sp.enc_ch2, m.enc_h, m.enc_w});
        TensorF y = sigmoid(m.dec2.forward(relu(m.dec1.forward(z))));
        outs.push_back(y);
        window.pop_front();
        window.push_back(y);
    }
    return outs;
}

std::vector<TensorF> forward_snn(const Model& m, const std::vector<TensorF>& in_frames,
                                 int out_len) {
    const auto& sp = m.spec;
    const int B = in_frames[0].shape()[0];
    const int s = sp.snn_stride, k = sp.kernel, pad = k / 2;
    const int h1 = conv_out_dim(sp.height, k, s, pad);
    const int w1 = conv_out_dim(sp.width, k, s, pad);
    const bool stc = sp.family == ModelFamily::stc_lif;
    LifParams<float> lif = sp.lif;

    auto s1 = LifState<float>::zeros({B, sp.enc_ch1, h1, w1});
    auto s2 = LifState<float>::zeros({B, sp.enc_ch2, m.enc_h, m.enc_w});
    auto s3 = LifState<float>::zeros({B, sp.enc_ch1, h1, w1});
    std::vector<TensorF> outs;
    TensorF prev_y;
    const int total = sp.in_len + out_len - 1;
    for (int t = 0; t < total; ++t) {
        const TensorF& x = t < sp.in_len ? in_frames[t] : prev_y;
        // Fresh Glorot weights put membrane potentials far below threshold,
        // where the rectangular surrogate is zero and nothing can learn; the
        // drive gain moves the initial operating point into its active band.
        TensorF i1 = m.enc1.forward(scale(x, sp.input_gain));
        s1 = stc ? stc_lif_step(s1, i1, m.gates1, lif) : lif_step(s1, i1, lif);
        // Spike maps are sparse 0/1 fields, so Glorot-scale kernels leave the
        // deeper membranes (and their surrogate gradients) near zero; the
        // hidden gain restores a usable operating point between layers.
        TensorF i2 = m.enc2.forward(scale(s1.o, sp.hidden_gain));
        s2 = stc ? stc_lif_step(s2, i2, m.gates2, lif) : lif_step(s2, i2, lif);
        TensorF i3 = m.dec1.forward(scale(s2.o, sp.hidden_gain));
        s3 = stc ? stc_lif_step(s3, i3, m.gates3, lif) : lif_step(s3, i3, lif);
        if (t >= sp.in_len - 1) {
            // Voltage readout: the last membrane map is the only graded
            // signal available, spikes downstream of it are binary. The skip
            // from the current frame means the decoder regresses the change,
            // not the whole frame.
            TensorF y = add(m.dec2.forward(s3.u), x);
            outs.push_back(y);
            prev_y = y;
        }
    }
    return outs;
}

std::vector<TensorF> forward_conv_lstm(const Model& m,
                                       const std::vector<TensorF>& in_frames,
                                       int out_len) {
    const auto& sp = m.spec;
    const int B = in_frames[0].shape()[0];
    TensorF h1 = TensorF::zeros({B, sp.enc_ch1, m.enc_h, m.enc_w});
    TensorF c1 = TensorF::zeros({B, sp.enc_ch1, m.enc_h, m.enc_w});
    TensorF h2 = TensorF::zeros({B, sp.enc_ch2, m.enc_h, m.enc_w});
    TensorF c2 = TensorF::zeros({B, sp.enc_ch2, m.enc_h, m.enc_w});
    std::vector<TensorF> outs;
    TensorF prev_y;
    const int total = sp.in_len + out_len - 1;
    for (int t = 0; t < total; ++t) {
        const TensorF& x = t < sp.in_len ? in_frames[t] : prev_y;
        TensorF e = relu(m.enc2.forward(relu(m.enc1.forward(x))));
        std::tie(h1, c1) = conv_lstm_cell_step(e, h1, c1, m.clstm1);
        std::tie(h2, c2) = conv_lstm_cell_step(h1, h2, c2, m.clstm2);
        if (t >= sp.in_len - 1) {
            TensorF y = sigmoid(m.dec2.forward(relu(m.dec1.forward(h2))));
            outs.push_back(y);
            prev_y = y;
        }
    }
    return outs;
}

}  // namespace

std::vector<TensorF> forward_sequence(const Model& model,
                                      const std::vector<TensorF>& in_frames,
                                      int out_len) {
    check_frames(model, in_frames);
    if (out_len < 0) out_len = model.spec.out_len;
    switch (model.spec.family) {
        case ModelFamily::base_rnn:
        case ModelFamily::base_lstm:
            return forward_ann(model, in_frames, out_len);
        case ModelFamily::base_snn:
        case ModelFamily::stc_lif:
            return forward_snn(model, in_frames, out_len);
        case ModelFamily::conv_lstm:
            return forward_conv_lstm(model, in_frames, out_len);
    }
    throw std::logic_error("forward_sequence: bad family");
}

namespace {

TensorF frames_to_batch(const std::vector<const Field2D*>& fields, int h, int w) {
    const int B = static_cast<int>(fields.size());
    std::vector<float> data;
    data.reserve(static_cast<size_t>(B) * h * w);
    for (const Field2D* f : fields) {
        if (f->height != h || f->width != w)
            throw std::invalid_argument("train: frame size does not match model grid");
        data.insert(data.end(), f->values.begin(), f->values.end());
    }
    return TensorF::from({B, 1, h, w}, std::move(data));
}

}  // namespace

TrainResult train(Model& model, const WindowedDataset& data, const TrainConfig& cfg,
                  std::ostream* log) {
    const auto& sp = model.spec;
    if (data.in_len != sp.in_len || data.out_len != sp.out_len)
        throw std::invalid_argument("train: dataset window does not match model spec");
    if (data.items.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1 || cfg.epochs < 1)
        throw std::invalid_argument("train: bad batch size or epoch count");

    auto params = model.param_tensors();
    AdamState<float> adam;
    adam.lr = cfg.lr;
    adam.init(params);

    TrainResult res;
    const size_t n = data.items.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        long batches = 0;
        for (size_t pos = 0; pos < n; pos += cfg.batch_size) {
            if (cfg.max_batches_per_epoch >= 0 && batches >= cfg.max_batches_per_epoch)
                break;
            const size_t end = std::min(n, pos + cfg.batch_size);
            std::vector<TensorF> inputs, targets;
            for (int t = 0; t < sp.in_len; ++t) {
                std::vector<const Field2D*> fs;
                for (size_t i = pos; i < end; ++i)
                    fs.push_back(&data.items[order[i]].inputs[t]);
                inputs.push_back(frames_to_batch(fs, sp.height, sp.width));
            }
            for (int t = 0; t < sp.out_len; ++t) {
                std::vector<const Field2D*> fs;
                for (size_t i = pos; i < end; ++i)
                    fs.push_back(&data.items[order[i]].targets[t]);
                targets.push_back(frames_to_batch(fs, sp.height, sp.width));
            }

            auto preds = forward_sequence(model, inputs);
            TensorF loss = mse_loss(preds[0], targets[0]);
            for (int t = 1; t < sp.out_len; ++t)
                loss = add(loss, mse_loss(preds[t], targets[t]));
            loss = scale(loss, 1.0f / static_cast<float>(sp.out_len));

            const float lv = loss.item();
            if (!std::isfinite(lv) || lv > cfg.divergence_threshold) {
                res.diverged = true;
                if (log) *log << "train: diverged at epoch " << epoch << " (loss=" << lv
                              << "), aborting\n";
                res.epoch_loss.push_back(lv);
                return res;
            }
            loss.backward();
            adam.update(params);
            loss_sum += lv;
            ++batches;
            ++res.steps;
        }
        res.epoch_loss.push_back(loss_sum / std::max(1L, batches));
        if (log)
            *log << "epoch " << epoch + 1 << "/" << cfg.epochs
                 << " loss=" << res.epoch_loss.back() << "\n";
        if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "/epoch_%04d.ckpt", epoch + 1);
            save_checkpoint(model, cfg.checkpoint_dir + buf);
        }
    }
    if (!cfg.checkpoint_dir.empty())
        save_checkpoint(model, cfg.checkpoint_dir + "/final.ckpt");
    return res;
}

std::vector<Field2D> rollout_autoregressive(const Model& model,
                                            const std::vector<Field2D>& seed,
                                            int horizon, bool threshold_refeed) {
    const auto& sp = model.spec;
    if (static_cast<int>(seed.size()) < sp.in_len)
        throw std::invalid_argument("rollout: need at least in_len seed frames");
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be positive");

    std::deque<Field2D> window(seed.end() - sp.in_len, seed.end());
    const float px = seed.back().pixel_size_mm;
    std::vector<Field2D> out;
    for (int k = 0; k < horizon; ++k) {
        std::vector<TensorF> inputs;
        for (const auto& f : window) {
            std::vector<const Field2D*> one{&f};
            inputs.push_back(frames_to_batch(one, sp.height, sp.width));
        }
        TensorF pred = forward_sequence(model, inputs, 1)[0];
        Field2D frame(sp.height, sp.width, px);
        const auto& d = pred.data();
        for (size_t i = 0; i < frame.values.size(); ++i)
            frame.values[i] = threshold_refeed ? (d[i] >= 0.5f ? 1.0f : 0.0f) : d[i];
        out.push_back(frame);
        window.pop_front();
        window.push_back(frame);
    }
    return out;
}

// --- checkpoints ---------------------------------------------------------------
// Layout: "MECK" | u32 version | u64 json_len | json | f32 params in registry
// order | u32 crc32 of the parameter bytes.

namespace {
constexpr char kCkptMagic[4] = {'M', 'E', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

nlohmann::json spec_to_json(const ModelSpec& s) {
    return {{"family", family_name(s.family)},
            {"height", s.height},
            {"width", s.width},
            {"in_len", s.in_len},
            {"out_len", s.out_len},
            {"enc_ch1", s.enc_ch1},
            {"enc_ch2", s.enc_ch2},
            {"kernel", s.kernel},
            {"hidden1", s.hidden1},
            {"ann_stride", s.ann_stride},
            {"snn_stride", s.snn_stride},
            {"snn_dilation", s.snn_dilation},
            {"lif",
             {{"decay", s.lif.decay},
              {"u_th", s.lif.u_th},
              {"surrogate_width", s.lif.surrogate_width}}},
            {"input_gain", s.input_gain},
            {"hidden_gain", s.hidden_gain},
            {"seed", s.seed}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.family = family_from_string(j.at("family").get<std::string>());
    s.height = j.at("height").get<int>();
    s.width = j.at("width").get<int>();
    s.in_len = j.at("in_len").get<int>();
    s.out_len = j.at("out_len").get<int>();
    s.enc_ch1 = j.at("enc_ch1").get<int>();
    s.enc_ch2 = j.at("enc_ch2").get<int>();
    s.kernel = j.at("kernel").get<int>();
    s.hidden1 = j.at("hidden1").get<int>();
    s.ann_stride = j.at("ann_stride").get<int>();
    s.snn_stride = j.at("snn_stride").get<int>();
    s.snn_dilation = j.value("snn_dilation", 1);
    s.lif.decay = j.at("lif").at("decay").get<float>();
    s.lif.u_th = j.at("lif").at("u_th").get<float>();
    s.lif.surrogate_width = j.at("lif").at("surrogate_width").get<float>();
    s.input_gain = j.value("input_gain", 1.0f);
    s.hidden_gain = j.value("hidden_gain", 1.0f);
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}
}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::json header = {{"spec", spec_to_json(model.spec)},
                             {"tensors", nlohmann::json::array()}};
    for (const auto& [name, t] : model.params)
        header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
    const std::string js = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kCkptMagic, 4);
    std::uint32_t ver = kCkptVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    std::uint64_t jlen = js.size();
    f.write(reinterpret_cast<const char*>(&jlen), 8);
    f.write(js.data(), static_cast<std::streamsize>(js.size()));

    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& [name, t] : model.params) {
        const auto& d = t.data();
        const auto* bytes = reinterpret_cast<const Bytef*>(d.data());
        const size_t nbytes = d.size() * sizeof(float);
        crc = crc32(crc, bytes, static_cast<uInt>(nbytes));
        f.write(reinterpret_cast<const char*>(bytes),
                static_cast<std::streamsize>(nbytes));
    }
    std::uint32_t crc32v = static_cast<std::uint32_t>(crc);
    f.write(reinterpret_cast<const char*>(&crc32v), 4);
    if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    std::uint32_t ver = 0;
    std::uint64_t jlen = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&ver), 4);
    f.read(reinterpret_cast<char*>(&jlen), 8);
    if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (ver != kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    std::string js(jlen, '\0');
    f.read(js.data(), static_cast<std::streamsize>(jlen));
    if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
    const auto header = nlohmann::json::parse(js);

    Model m = build_model(spec_from_json(header.at("spec")));
    const auto& tens = header.at("tensors");
    if (tens.size() != m.params.size())
        throw std::runtime_error("checkpoint tensor list does not match model: " + path);

    uLong crc = crc32(0L, Z_NULL, 0);
    for (size_t i = 0; i < m.params.size(); ++i) {
        auto& [name, t] = m.params[i];
        if (tens[i].at("name").get<std::string>() != name ||
            tens[i].at("shape").get<std::vector<int>>() != t.shape())
            throw std::runtime_error("checkpoint tensor mismatch at " + name);
        auto& d = t.data();
        f.read(reinterpret_cast<char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(d.data()),
                    static_cast<uInt>(d.size() * sizeof(float)));
    }
    std::uint32_t stored = 0;
    f.read(reinterpret_cast<char*>(&stored), 4);
    if (!f || stored != static_cast<std::uint32_t>(crc))
        throw std::runtime_error("checkpoint checksum mismatch: " + path);
    return m;
}

}  // namespace microevo::nn
