#include <zlib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef MICROEVO_HAVE_OPENMP
#include <omp.h>
#include <sstream>
#endif

#include "microevo/eval.hpp"
#include "microevo/fcg.hpp"
#include "microevo/grayscott.hpp"
#include "microevo/kernels.hpp"
#include "microevo/library_io.hpp"
#include "microevo/models.hpp"

namespace fs = std::filesystem;
using namespace microevo;

namespace {

std::string crc_hex(const std::string& s) {
    const uLong crc = crc32(crc32(0L, Z_NULL, 0),
                            reinterpret_cast<const Bytef*>(s.data()),
                            static_cast<uInt>(s.size()));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

struct Global {
    std::string out = "runs";
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
};

// Every command persists the resolved configuration it actually ran with;
// its hash stamps all derived artifacts.
std::string persist_config(const CLI::App& app, const Global& g, const std::string& cmd) {
    const std::string resolved = app.config_to_str(true, true);
    fs::create_directories(g.out);
    std::ofstream f(fs::path(g.out) / ("resolved_" + cmd + ".toml"));
    f << resolved;
    // The hash stamps derived artifacts, so it covers only settings that can
    // change results; filesystem locations are excluded to keep identical
    // runs in different directories byte-identical.
    std::string hashed;
    std::istringstream lines(resolved);
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        std::string key = line.substr(0, eq == std::string::npos ? 0 : eq);
        const auto dot = key.rfind('.');
        if (dot != std::string::npos) key = key.substr(dot + 1);
        if (key == "out" || key == "library" || key == "ckpt") continue;
        hashed += line;
        hashed += '\n';
    }
    return crc_hex(hashed);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

std::string library_key(const DigitalLibrary& lib) {
    return crc_hex(manifest_content_key(lib.manifest));
}

nn::ModelSpec spec_for(const std::string& family, const DigitalLibrary& lib,
                       int in_len, int out_len, std::uint64_t seed) {
    nn::ModelSpec spec;
    spec.family = nn::family_from_string(family);
    const auto& f0 = lib.samples.at(0).frames.at(0);
    spec.height = f0.height;
    spec.width = f0.width;
    spec.in_len = in_len;
    spec.out_len = out_len;
    spec.seed = seed;
    return spec;
}

int default_train_samples(const DigitalLibrary& lib) {
    const int n = static_cast<int>(lib.samples.size());
    if (lib.manifest.generator.find("fcg") == 0 && n >= 908) return 800;
    return std::max(1, n * 9 / 10);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"microevo: microstructure-evolution libraries and network training"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML configuration file; flags override");

    Global g;
    app.add_option("--out", g.out, "output directory root")->capture_default_str();
    app.add_option("--seed", g.seed, "base RNG seed")->capture_default_str();
    app.add_flag("--deterministic", g.deterministic,
                 "serial kernels + pinned timestamps for byte-stable output");
    app.add_option("--threads", g.threads, "OpenMP thread cap (0 = library default)");

    // gen-turing ---------------------------------------------------------------
    auto* gen_turing = app.add_subcommand("gen-turing", "build the Turing-pattern library");
    TuringBuildOptions topt;
    GrayScottParams gsp;
    std::string tname = "turing";
    gen_turing->add_option("--sequences", topt.n_sequences)->capture_default_str();
    gen_turing->add_option("--frames", topt.frames_per_sequence)->capture_default_str();
    gen_turing->add_option("--burn-in", topt.burn_in_steps)->capture_default_str();
    gen_turing->add_option("--stride", topt.record_stride)->capture_default_str();
    gen_turing->add_option("--height", gsp.grid_h)->capture_default_str();
    gen_turing->add_option("--width", gsp.grid_w)->capture_default_str();
    gen_turing->add_option("--name", tname, "library name under <out>/libraries")
        ->capture_default_str();

    // gen-fcg ------------------------------------------------------------------
    auto* gen_fcg = app.add_subcommand("gen-fcg", "build the fatigue-crack-growth library");
    FcgBuildOptions fopt;
    std::string fname = "fcg";
    gen_fcg->add_option("--samples", fopt.n_samples)->capture_default_str();
    gen_fcg->add_option("--name", fname, "library name under <out>/libraries")
        ->capture_default_str();

    // train ----------------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a model on a library");
    std::string tr_lib, tr_family = "base_snn", tr_name;
    int tr_in = 3, tr_out = 1, tr_step = 1, tr_max_frames = -1;
    int tr_train_samples = -1, tr_max_windows = -1, tr_ckpt_every = 0;
    nn::TrainConfig tcfg;
    train_cmd->add_option("--library", tr_lib, "library directory")->required();
    train_cmd->add_option("--family", tr_family)->capture_default_str();
    train_cmd->add_option("--in-len", tr_in)->capture_default_str();
    train_cmd->add_option("--out-len", tr_out)->capture_default_str();
    train_cmd->add_option("--step", tr_step)->capture_default_str();
    train_cmd->add_option("--max-frames", tr_max_frames,
                          "truncate sequences before windowing (-1 = all)");
    train_cmd->add_option("--train-samples", tr_train_samples,
                          "samples in the train split (-1 = protocol default)");
    train_cmd->add_option("--max-windows", tr_max_windows, "cap on training items");
    train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
    train_cmd->add_option("--batch", tcfg.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", tcfg.lr)->capture_default_str();
    train_cmd->add_option("--max-batches", tcfg.max_batches_per_epoch,
                          "cap batches per epoch (-1 = full)");
    train_cmd->add_option("--ckpt-every", tr_ckpt_every, "epochs between checkpoints");
    train_cmd->add_option("--name", tr_name, "run name (default: family)");

    // eval ----------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "error curve + analysis for a checkpoint");
    std::string ev_ckpt, ev_lib, ev_name = "eval";
    int ev_horizon = 1, ev_test_start = -1;
    int ev_threshold = -1;  // -1 auto, 0 off, 1 on
    eval_cmd->add_option("--ckpt", ev_ckpt)->required();
    eval_cmd->add_option("--library", ev_lib)->required();
    eval_cmd->add_option("--horizon", ev_horizon)->capture_default_str();
    eval_cmd->add_option("--test-start", ev_test_start,
                         "first test sample index (-1 = protocol default)");
    eval_cmd->add_option("--threshold-refeed", ev_threshold,
                         "binarize re-fed frames at 0.5 (-1 auto, 0 off, 1 on)");
    eval_cmd->add_option("--name", ev_name)->capture_default_str();

    // rollout --------------------------------------------------------------------
    auto* roll_cmd = app.add_subcommand("rollout", "autoregressive prediction export");
    std::string ro_ckpt, ro_lib, ro_name = "rollout";
    int ro_sample = 0, ro_horizon = 5, ro_threshold = -1;
    roll_cmd->add_option("--ckpt", ro_ckpt)->required();
    roll_cmd->add_option("--library", ro_lib)->required();
    roll_cmd->add_option("--sample", ro_sample)->capture_default_str();
    roll_cmd->add_option("--horizon", ro_horizon)->capture_default_str();
    roll_cmd->add_option("--threshold-refeed", ro_threshold)->capture_default_str();
    roll_cmd->add_option("--name", ro_name)->capture_default_str();

    // analyze ---------------------------------------------------------------------
    auto* an_cmd = app.add_subcommand("analyze", "weight/connectivity/memory report");
    std::string an_ckpt, an_name = "analyze";
    double an_threshold = 0.001;
    an_cmd->add_option("--ckpt", an_ckpt)->required();
    an_cmd->add_option("--threshold", an_threshold, "connectivity pruning threshold")
        ->capture_default_str();
    an_cmd->add_option("--name", an_name)->capture_default_str();

    // export-frames ------------------------------------------------------------------
    auto* ex_cmd = app.add_subcommand("export-frames", "write library frames as PGM");
    std::string ex_lib;
    int ex_sample = 0;
    ex_cmd->add_option("--library", ex_lib)->required();
    ex_cmd->add_option("--sample", ex_sample, "sample index (-1 = all)")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
#ifdef MICROEVO_HAVE_OPENMP
        if (g.threads > 0) omp_set_num_threads(g.threads);
#endif
        if (g.deterministic) kernels::set_parallel(false);

        if (gen_turing->parsed()) {
            const std::string cfg_hash = persist_config(app, g, "gen-turing");
            topt.base_seed = g.seed;
            topt.deterministic_timestamp = g.deterministic;
            DigitalLibrary lib = build_turing_library(topt, gsp);
            const std::string dir = g.out + "/libraries/" + tname;
            save_library(lib, dir);
            std::cout << "turing library: " << lib.samples.size() << " sequences x "
                      << lib.samples[0].frames.size() << " frames, grid " << gsp.grid_h
                      << "x" << gsp.grid_w << "\n"
                      << "  dir=" << dir << " key=" << library_key(lib)
                      << " config=" << cfg_hash << "\n";
        } else if (gen_fcg->parsed()) {
            const std::string cfg_hash = persist_config(app, g, "gen-fcg");
            fopt.base_seed = g.seed;
            fopt.deterministic_timestamp = g.deterministic;
            PlateSpec plate;
            LoadSpec loads;
            MaterialParams mat;
            DigitalLibrary lib = build_fcg_library(fopt, plate, loads, mat);
            const std::string dir = g.out + "/libraries/" + fname;
            save_library(lib, dir);
            long retries = 0;
            for (const auto& s : lib.manifest.extra.at("samples"))
                retries += s.at("retries").get<int>();
            std::cout << "fcg library: " << lib.samples.size() << " samples x "
                      << lib.samples[0].frames.size() << " frames, "
                      << retries << " regenerated paths\n"
                      << "  dir=" << dir << " key=" << library_key(lib)
                      << " config=" << cfg_hash << "\n";
        } else if (train_cmd->parsed()) {
            const std::string cfg_hash = persist_config(app, g, "train");
            DigitalLibrary lib = load_library(tr_lib);
            const int n_train = tr_train_samples >= 0 ? tr_train_samples
                                                      : default_train_samples(lib);
            auto [train_lib, test_lib] = split_library(lib, n_train, g.seed);
            WindowedDataset ds = make_windowed_dataset(train_lib, tr_in, tr_out,
                                                       tr_step, tr_max_frames);
            if (tr_max_windows >= 0 &&
                static_cast<int>(ds.items.size()) > tr_max_windows)
                ds.items.resize(tr_max_windows);

            if (tr_name.empty()) tr_name = tr_family;
            nn::Model model = build_model(
                spec_for(tr_family, lib, tr_in, tr_out, g.seed + 1));
            tcfg.seed = g.seed;
            tcfg.checkpoint_dir = g.out + "/checkpoints/" + tr_name;
            tcfg.checkpoint_every = tr_ckpt_every;
            fs::create_directories(tcfg.checkpoint_dir);
            std::cout << tr_family << ": " << model.param_count() << " parameters, "
                      << ds.items.size() << " training items\n";
            nn::TrainResult res = nn::train(model, ds, tcfg, &std::cout);

            nlohmann::json rep = {{"family", tr_family},
                                  {"config_hash", cfg_hash},
                                  {"library_key", library_key(lib)},
                                  {"train_samples", n_train},
                                  {"items", ds.items.size()},
                                  {"n_params", model.param_count()},
                                  {"epoch_loss", res.epoch_loss},
                                  {"steps", res.steps},
                                  {"diverged", res.diverged}};
            write_json(fs::path(g.out) / "reports" / (tr_name + "_train.json"), rep);
            std::cout << "checkpoint: " << tcfg.checkpoint_dir << "/final.ckpt\n";
            return res.diverged ? 1 : 0;
        } else if (eval_cmd->parsed()) {
            const std::string cfg_hash = persist_config(app, g, "eval");
            nn::Model model = nn::load_checkpoint(ev_ckpt);
            DigitalLibrary lib = load_library(ev_lib);
            const int n_train = ev_test_start >= 0 ? ev_test_start
                                                   : default_train_samples(lib);
            auto [train_lib, test_lib] = split_library(lib, n_train, g.seed);
            const bool thr = ev_threshold == -1
                                 ? (nn::is_spiking(model.spec.family) &&
                                    lib.manifest.generator.find("fcg") == 0)
                                 : ev_threshold != 0;

            eval::EvalReport report;
            report.curve = eval::error_curve(eval::model_roller(model, thr),
                                             test_lib.samples, model.spec.in_len,
                                             ev_horizon);
            report.n_params = model.param_count();
            const auto& f0 = lib.samples[0].frames[0];
            report.m_pixel = eval::memory_pixel(4, f0.width, f0.height);
            report.m_model = eval::memory_model(4, report.n_params);
            report.m_vector = eval::memory_vector(40);
            report.interface_px = eval::interface_thickness(f0);
            report.weights = eval::weight_statistics(model);
            report.connectivity = eval::connectivity_density(model);

            nlohmann::json j = report.to_json();
            j["config_hash"] = cfg_hash;
            j["library_key"] = library_key(lib);
            write_json(fs::path(g.out) / "reports" / (ev_name + ".json"), j);
            {
                std::ofstream csv(fs::path(g.out) / "reports" / (ev_name + "_curve.csv"));
                csv << "step,mae\n";
                for (size_t t = 0; t < report.curve.per_step.size(); ++t)
                    csv << t + 1 << "," << report.curve.per_step[t] << "\n";
            }
            std::cout << "cumulative MAE over horizon " << ev_horizon << ": "
                      << report.curve.cumulative << " (test sequences: "
                      << test_lib.samples.size() << ")\n";
        } else if (roll_cmd->parsed()) {
            persist_config(app, g, "rollout");
            nn::Model model = nn::load_checkpoint(ro_ckpt);
            DigitalLibrary lib = load_library(ro_lib);
            const auto& seq = lib.samples.at(ro_sample);
            const bool thr = ro_threshold == -1
                                 ? (nn::is_spiking(model.spec.family) &&
                                    lib.manifest.generator.find("fcg") == 0)
                                 : ro_threshold != 0;
            std::vector<Field2D> seed(seq.frames.begin(),
                                      seq.frames.begin() + model.spec.in_len);
            auto frames = nn::rollout_autoregressive(model, seed, ro_horizon, thr);
            const fs::path dir = fs::path(g.out) / "exports" / ro_name;
            fs::create_directories(dir);
            char buf[32];
            for (size_t t = 0; t < frames.size(); ++t) {
                std::snprintf(buf, sizeof(buf), "pred_%04zu.pgm", t);
                write_pgm(frames[t], (dir / buf).string());
            }
            std::cout << "wrote " << frames.size() << " frames to " << dir << "\n";
        } else if (an_cmd->parsed()) {
            const std::string cfg_hash = persist_config(app, g, "analyze");
            nn::Model model = nn::load_checkpoint(an_ckpt);
            const auto stats = eval::weight_statistics(model);
            const auto conn = eval::connectivity_density(model, an_threshold);
            nlohmann::json j = {{"config_hash", cfg_hash},
                                {"family", nn::family_name(model.spec.family)},
                                {"n_params", model.param_count()},
                                {"memory_model_bytes",
                                 eval::memory_model(4, model.param_count())},
                                {"connectivity_pooled", conn.pooled},
                                {"pooled_variance", stats.pooled.variance}};
            write_json(fs::path(g.out) / "reports" / (an_name + ".json"), j);
            {
                std::ofstream csv(fs::path(g.out) / "reports" / (an_name + "_hist.csv"));
                csv << "bin_center,count\n";
                const auto& h = stats.pooled;
                const double width = (h.bin_max - h.bin_min) / h.counts.size();
                for (size_t b = 0; b < h.counts.size(); ++b)
                    csv << h.bin_min + (b + 0.5) * width << "," << h.counts[b] << "\n";
            }
            std::cout << "params=" << model.param_count()
                      << " connectivity=" << conn.pooled
                      << " pooled_variance=" << stats.pooled.variance << "\n";
        } else if (ex_cmd->parsed()) {
            persist_config(app, g, "export-frames");
            DigitalLibrary lib = load_library(ex_lib);
            const fs::path dir = fs::path(g.out) / "exports";
            fs::create_directories(dir);
            char buf[48];
            size_t n = 0;
            for (size_t s = 0; s < lib.samples.size(); ++s) {
                if (ex_sample >= 0 && static_cast<size_t>(ex_sample) != s) continue;
                for (size_t t = 0; t < lib.samples[s].frames.size(); ++t) {
                    std::snprintf(buf, sizeof(buf), "sample_%04zu_frame_%04zu.pgm", s, t);
                    write_pgm(lib.samples[s].frames[t], (dir / buf).string());
                    ++n;
                }
            }
            std::cout << "wrote " << n << " frames to " << dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
