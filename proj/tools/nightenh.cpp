// nightenh - night-image enhancement toolkit.
//
// Subcommands: decompose | enhance | train | eval | synth | gradcheck.
// Progress goes to stderr; machine-readable results go to files or stdout.
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "nightenh/decomposition.hpp"
#include "nightenh/errors.hpp"
#include "nightenh/gradcheck.hpp"
#include "nightenh/image_io.hpp"
#include "nightenh/metrics.hpp"
#include "nightenh/suppression.hpp"
#include "nightenh/synthbench.hpp"

namespace fs = std::filesystem;
using namespace nightenh;

namespace {

struct CliState {
    uint32_t seed = 0;
    bool verbose = false;
};

void add_decomp_flags(CLI::App* cmd, DecompConfig& cfg) {
    cmd->add_option("--iterations", cfg.iterations, "Optimization iterations");
    cmd->add_option("--lr", cfg.lr, "Learning rate");
    cmd->add_option("--lambda-init", cfg.lambda_init, "Initialization loss weight");
    cmd->add_option("--lambda-excl", cfg.lambda_excl, "Gradient exclusion loss weight");
    cmd->add_option("--lambda-recon", cfg.lambda_recon, "Reconstruction loss weight");
    cmd->add_option("--lambda-cc", cfg.lambda_cc, "Color constancy loss weight");
    cmd->add_option("--scales", cfg.n_scales, "Exclusion loss scales");
    cmd->add_option("--mu", cfg.mu_init, "Relative-smoothness weight for the G initializer");
    cmd->add_option("--init-iters", cfg.init_iters, "Half-quadratic iterations for the G initializer");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write: " + path);
    return f;
}

int run(int argc, char** argv) {
    CLI::App app{"nightenh: decompose night images into shading/reflectance/light-effects layers,"
                 " suppress light effects and boost dark regions"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Optional key=value config file; command-line flags win");

    CliState st;
    app.add_option("--seed", st.seed, "Random seed")->envname("NIGHTENH_SEED");
    app.add_flag("-v,--verbose", st.verbose, "Chattier progress on stderr");

    // decompose
    auto* cmd_dec = app.add_subcommand("decompose", "Decompose an image into R, L, G and J_init layers");
    std::string dec_img, dec_out;
    DecompConfig dec_cfg;
    cmd_dec->add_option("image", dec_img, "Input image")->required();
    cmd_dec->add_option("--out", dec_out, "Output directory")->required();
    add_decomp_flags(cmd_dec, dec_cfg);

    // enhance
    auto* cmd_enh = app.add_subcommand("enhance", "Run the suppression generator on an image");
    std::string enh_img, enh_weights, enh_mode = "suppress", enh_out;
    DecompConfig enh_cfg;
    cmd_enh->add_option("image", enh_img, "Input image")->required();
    cmd_enh->add_option("--weights", enh_weights, "Weights archive directory")->required();
    cmd_enh->add_option("--mode", enh_mode, "suppress | lowlight")
        ->check(CLI::IsMember({"suppress", "lowlight"}));
    cmd_enh->add_option("--out", enh_out, "Output PNG path")->required();
    add_decomp_flags(cmd_enh, enh_cfg);

    // train
    auto* cmd_trn = app.add_subcommand("train", "Train the suppression network on unpaired folders");
    std::string trn_e, trn_ef, trn_out, trn_log;
    SuppressionConfig trn_cfg;
    cmd_trn->add_option("--effects", trn_e, "Folder of images with light effects")->required();
    cmd_trn->add_option("--effects-free", trn_ef, "Folder of light-effects-free images")->required();
    cmd_trn->add_option("--out", trn_out, "Output weights archive directory")->required();
    cmd_trn->add_option("--log", trn_log, "Training log CSV (default <out>/train_log.csv)");
    cmd_trn->add_option("--steps", trn_cfg.steps, "Training steps");
    cmd_trn->add_option("--crop", trn_cfg.crop, "Crop size");
    cmd_trn->add_option("--batch", trn_cfg.batch, "Crops per domain per step");
    cmd_trn->add_option("--lr-gen", trn_cfg.lr_gen, "Generator/classifier learning rate");
    cmd_trn->add_option("--lr-disc", trn_cfg.lr_disc, "Discriminator learning rate");
    cmd_trn->add_option("--lambda-gray-feat", trn_cfg.lambda_gray_feat, "Gray-feature loss weight");
    cmd_trn->add_option("--lambda-atten", trn_cfg.lambda_atten, "Attention loss weight");
    cmd_trn->add_option("--lambda-adv", trn_cfg.lambda_adv, "Adversarial loss weight");
    cmd_trn->add_option("--lambda-iden", trn_cfg.lambda_iden, "Identity loss weight");
    cmd_trn->add_flag("--lsgan", trn_cfg.least_squares_gan, "Least-squares adversarial variant");
    cmd_trn->add_option("--extractor", trn_cfg.extractor_dir, "External feature-extractor weights directory");
    add_decomp_flags(cmd_trn, trn_cfg.decomp);

    // eval
    auto* cmd_evl = app.add_subcommand("eval", "Full-reference metrics over paired folders");
    std::string evl_pred, evl_gt, evl_out;
    cmd_evl->add_option("--pred", evl_pred, "Predictions folder")->required();
    cmd_evl->add_option("--gt", evl_gt, "Ground-truth folder")->required();
    cmd_evl->add_option("--out", evl_out, "Report CSV path")->required();

    // synth
    auto* cmd_syn = app.add_subcommand("synth", "Composite synthetic light effects over clean images");
    std::string syn_clean, syn_out;
    int syn_glows = 2;
    float syn_sigma = 12.f, syn_amp = 0.5f;
    cmd_syn->add_option("--clean", syn_clean, "Folder of clean images")->required();
    cmd_syn->add_option("--out", syn_out, "Output folder")->required();
    cmd_syn->add_option("--glows", syn_glows, "Glow count per image");
    cmd_syn->add_option("--sigma", syn_sigma, "Glow radius in pixels");
    cmd_syn->add_option("--amp", syn_amp, "Peak glow amplitude");

    // gradcheck
    auto* cmd_grd = app.add_subcommand("gradcheck", "Finite-difference check of every gradient path");
    int grd_coords = 5;
    cmd_grd->add_option("--coords", grd_coords, "Coordinates per operation");

    // Global flags (--seed, -v) may also appear after the subcommand name.
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors collapse to exit 1
    }

    if (cmd_dec->parsed()) {
        const Image I = load_image(dec_img);
        if (st.verbose) std::fprintf(stderr, "decomposing %s (%dx%d)\n", dec_img.c_str(), I.width, I.height);
        DecompResult res = decompose(I, dec_cfg);
        fs::create_directories(dec_out);
        save_image(res.layers.R, (fs::path(dec_out) / "R.png").string());
        save_image(res.layers.L, (fs::path(dec_out) / "L.png").string());
        save_image(res.layers.G, (fs::path(dec_out) / "G.png").string());
        save_image(res.layers.J_init, (fs::path(dec_out) / "J_init.png").string());
        auto trace = open_out((fs::path(dec_out) / "trace.csv").string());
        write_trace(res.trace, trace);
        std::fprintf(stderr, "wrote R.png, L.png, G.png, J_init.png, trace.csv to %s\n", dec_out.c_str());
        return 0;
    }

    if (cmd_enh->parsed()) {
        const Image I = load_image(enh_img);
        SuppressionWeights weights = load_weights(enh_weights);
        const EnhanceMode mode = enh_mode == "suppress" ? EnhanceMode::suppress : EnhanceMode::lowlight;
        EnhanceResult res = enhance(I, weights, mode, enh_cfg);
        std::fprintf(stderr, "decomposition: %s\n", res.decomposition_used ? "used" : "skipped");
        save_image(res.output, enh_out);
        return 0;
    }

    if (cmd_trn->parsed()) {
        trn_cfg.seed = st.seed;
        if (trn_cfg.decomp.seed == 0) trn_cfg.decomp.seed = st.seed;
        if (trn_log.empty()) trn_log = (fs::path(trn_out) / "train_log.csv").string();
        fs::create_directories(trn_out);
        auto log = open_out(trn_log);
        SuppressionWeights weights = SuppressionWeights::init(st.seed);
        if (st.verbose) std::fprintf(stderr, "training: %d steps\n", trn_cfg.steps);
        train_suppression(trn_e, trn_ef, trn_cfg, weights, &log);
        save_weights(weights, trn_out);
        // Diagnostic attention map for the first light-effects image.
        const std::string first = list_images(trn_e).front();
        EffectsSample probe = make_effects_sample(load_image(first), trn_cfg.decomp);
        save_image(sample_attention_map(weights, {probe.J_init, probe.G, true}),
                   (fs::path(trn_out) / "attention.png").string());
        std::fprintf(stderr, "wrote weights archive to %s, log to %s\n", trn_out.c_str(), trn_log.c_str());
        return 0;
    }

    if (cmd_evl->parsed()) {
        EvalReport report = eval_dataset(evl_pred, evl_gt);
        auto out = open_out(evl_out);
        write_report(report, out);
        std::printf("%s\n", format_report_summary(report).c_str());
        return 0;
    }

    if (cmd_syn->parsed()) {
        fs::create_directories(syn_out);
        std::mt19937 rng(st.seed);
        for (const auto& path : list_images(syn_clean)) {
            const Image clean = load_image(path);
            GlowSpec spec;
            spec.count = syn_glows;
            spec.sigma = syn_sigma;
            spec.amplitude = {syn_amp, syn_amp, syn_amp};
            spec.seed = rng();
            if (spec.count == 1) {
                spec.cx = 0.15f * clean.width + (rng() % 1000) / 1000.f * 0.7f * clean.width;
                spec.cy = 0.15f * clean.height + (rng() % 1000) / 1000.f * 0.7f * clean.height;
            }
            Composite comp = synth_composite(clean, spec);
            const std::string stem = fs::path(path).stem().string();
            save_image(comp.input, (fs::path(syn_out) / (stem + ".png")).string());
            save_image(comp.glow, (fs::path(syn_out) / (stem + "_G.png")).string());
            if (st.verbose) std::fprintf(stderr, "composited %s\n", stem.c_str());
        }
        return 0;
    }

    if (cmd_grd->parsed()) {
        GradCheckSummary s = run_gradcheck(st.seed, grd_coords);
        for (const auto& r : s.results) std::printf("%-26s %.3e\n", r.name.c_str(), r.max_rel_err);
        std::printf("max relative error: %.3e\n", s.max_rel_err);
        if (s.max_rel_err > 1e-3) {
            std::fprintf(stderr, "gradcheck failed: max relative error %.3e > 1e-3\n", s.max_rel_err);
            return 3;
        }
        return 0;
    }

    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
