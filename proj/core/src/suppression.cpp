#include "nightenh/suppression.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <ostream>
#include <random>

#include "nightenh/errors.hpp"
#include "nightenh/image_io.hpp"
#include "nightenh/weights_io.hpp"

namespace fs = std::filesystem;

namespace nightenh {

namespace {

constexpr float kProbClamp = 1e-6f;

Var clamp_prob(Tape& t, Var p) { return t.clamp(p, kProbClamp, 1.f - kProbClamp); }

Var mean_of(Tape& t, const std::vector<Var>& xs) {
    Var acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
    return t.mul_c(acc, 1.f / static_cast<float>(xs.size()));
}

// E[log sigma(logits)] averaged over patches, then over the batch.
Var mean_log_prob(Tape& t, const std::vector<Var>& logits, bool one_minus) {
    std::vector<Var> terms;
    terms.reserve(logits.size());
    for (Var l : logits) {
        Var p = clamp_prob(t, t.sigmoid(l));
        if (one_minus) p = t.add_c(t.mul_c(p, -1.f), 1.f);
        terms.push_back(t.mean(t.log(p)));
    }
    return mean_of(t, terms);
}

uint64_t mix_seed(uint64_t seed, uint64_t step) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (step + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Image crop_image(const Image& img, int y0, int x0, int h, int w) {
    Image out = Image::create(h, w, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

} // namespace

SuppressionWeights SuppressionWeights::init(uint32_t seed) {
    SuppressionWeights w;
    w.gen = GeneratorWeights::init(seed);
    w.cls = ClassifierWeights::init(seed);
    w.dis = DiscriminatorWeights::init(seed);
    return w;
}

EffectsSample make_effects_sample(const Image& I, const DecompConfig& cfg) {
    EffectsSample s;
    s.input = I;
    DecompResult d = decompose(I, cfg);
    s.J_init = std::move(d.layers.J_init);
    s.G = std::move(d.layers.G);
    s.I_gray3 = replicate_channels(adaptive_fusion_gray(I), 3);
    return s;
}

double loss_atten(double gamma_e, double gamma_ef) {
    const double lo = kProbClamp, hi = 1.0 - kProbClamp;
    gamma_e = std::clamp(gamma_e, lo, hi);
    gamma_ef = std::clamp(gamma_ef, lo, hi);
    return -(std::log(gamma_e) + std::log(1.0 - gamma_ef));
}

Var loss_atten_t(Tape& t, const std::vector<Var>& gamma_e, const std::vector<Var>& gamma_ef) {
    std::vector<Var> pos, neg;
    for (Var g : gamma_e) pos.push_back(t.log(clamp_prob(t, g)));
    for (Var g : gamma_ef) neg.push_back(t.log(t.add_c(t.mul_c(clamp_prob(t, g), -1.f), 1.f)));
    return t.mul_c(mean_of(t, pos) + mean_of(t, neg), -1.f);
}

AdvLosses loss_adv(const std::vector<double>& d_ef, const std::vector<double>& d_refine) {
    if (d_ef.empty() || d_refine.empty()) throw ShapeError("loss_adv: empty batch");
    const double lo = kProbClamp, hi = 1.0 - kProbClamp;
    double real = 0.0, fake = 0.0, gen = 0.0;
    for (double d : d_ef) real += std::log(std::clamp(d, lo, hi));
    for (double d : d_refine) {
        fake += std::log(1.0 - std::clamp(d, lo, hi));
        gen -= std::log(std::clamp(d, lo, hi));
    }
    return {real / d_ef.size() + fake / d_refine.size(), gen / d_refine.size()};
}

double loss_iden(const Image& generated, const Image& j_ef) {
    if (!generated.same_extent(j_ef)) throw ShapeError("loss_iden: extents differ");
    double acc = 0.0;
    for (int i = 0; i < generated.sample_count(); ++i) acc += std::fabs(generated.data[i] - j_ef.data[i]);
    return acc / generated.sample_count();
}

TrainRecord train_step(const std::vector<EffectsSample>& batch_e, const std::vector<Image>& batch_ef,
                       SuppressionWeights& weights, const FeatureExtractor& ext, const SuppressionConfig& cfg) {
    if (batch_e.empty() || batch_ef.empty()) throw ShapeError("train_step: empty batch");
    TrainRecord rec{weights.global_step, 0.0, 0.0, 0.0, 0.0, 0.0};

    std::vector<Parameter*> dis_params = weights.dis.params();
    // Discriminator phase; generator outputs are recomputed as constants so
    // no gradient leaks across the two updates.
    if (cfg.lambda_adv > 0.f) {
        Tape t;
        ParamBinder gen_c{t, false}, dis_p{t, true};
        std::vector<Var> logits_real, logits_fake;
        for (const auto& s : batch_e) {
            GeneratorOut out = generator_forward_t(t, weights.gen, gen_c, t.constant(image_to_tensor(s.J_init)),
                                                   t.constant(image_to_tensor(s.G)));
            logits_fake.push_back(discriminator_forward_t(t, weights.dis, dis_p, out.output));
        }
        for (const auto& img : batch_ef)
            logits_real.push_back(discriminator_forward_t(t, weights.dis, dis_p, t.constant(image_to_tensor(img))));
        Var objective{};
        if (cfg.least_squares_gan) {
            std::vector<Var> terms;
            for (Var l : logits_real) terms.push_back(t.mean(t.square(t.add_c(l, -1.f))));
            for (Var l : logits_fake) terms.push_back(t.mean(t.square(l)));
            Var loss = t.mul_c(mean_of(t, terms), 0.5f);
            rec.l_adv_d = t.value_f64(loss);
            objective = t.mul_c(loss, cfg.lambda_adv);
        } else {
            Var obj = mean_log_prob(t, logits_real, false) + mean_log_prob(t, logits_fake, true);
            Var loss = t.mul_c(obj, -1.f);
            rec.l_adv_d = t.value_f64(loss);
            objective = t.mul_c(loss, cfg.lambda_adv);
        }
        t.backward(objective);
    }
    adam_step(dis_params, cfg.lr_disc);

    // Generator + classifier phase against the just-updated discriminator.
    std::vector<Parameter*> gen_params = weights.gen.params();
    for (Parameter* p : weights.cls.params()) gen_params.push_back(p);
    const bool need_e_forward = cfg.lambda_adv > 0.f || cfg.lambda_atten > 0.f || cfg.lambda_gray_feat > 0.f;
    const bool need_ef_forward = cfg.lambda_atten > 0.f || cfg.lambda_iden > 0.f;
    if (need_e_forward || need_ef_forward) {
        Tape t;
        ParamBinder gen_p{t, true}, dis_c{t, false};
        std::vector<Var> gamma_e, gamma_ef, gen_logits, gray_terms, iden_terms;
        if (need_e_forward)
            for (const auto& s : batch_e) {
                GeneratorOut out = generator_forward_t(t, weights.gen, gen_p, t.constant(image_to_tensor(s.J_init)),
                                                       t.constant(image_to_tensor(s.G)));
                if (cfg.lambda_atten > 0.f)
                    gamma_e.push_back(classifier_forward_t(t, weights.cls, gen_p, out.bottleneck));
                if (cfg.lambda_adv > 0.f)
                    gen_logits.push_back(discriminator_forward_t(t, weights.dis, dis_c, out.output));
                if (cfg.lambda_gray_feat > 0.f)
                    gray_terms.push_back(
                        gray_feat_loss_t(out.output, t.constant(image_to_tensor(s.I_gray3)), ext, cfg.hf));
            }
        if (need_ef_forward)
            for (const auto& img : batch_ef) {
                Var in = t.constant(image_to_tensor(img));
                Var g0 = t.constant(Tensor({3, img.height, img.width}));
                GeneratorOut out = generator_forward_t(t, weights.gen, gen_p, in, g0);
                if (cfg.lambda_atten > 0.f)
                    gamma_ef.push_back(classifier_forward_t(t, weights.cls, gen_p, out.bottleneck));
                if (cfg.lambda_iden > 0.f) iden_terms.push_back(t.mean(t.abs(out.output - in)));
            }

        std::vector<Var> weighted;
        if (cfg.lambda_adv > 0.f) {
            Var g{};
            if (cfg.least_squares_gan) {
                std::vector<Var> terms;
                for (Var l : gen_logits) terms.push_back(t.mean(t.square(t.add_c(l, -1.f))));
                g = t.mul_c(mean_of(t, terms), 0.5f);
            } else {
                g = t.mul_c(mean_log_prob(t, gen_logits, false), -1.f);
            }
            rec.l_adv_g = t.value_f64(g);
            weighted.push_back(t.mul_c(g, cfg.lambda_adv));
        }
        if (cfg.lambda_atten > 0.f) {
            Var a = loss_atten_t(t, gamma_e, gamma_ef);
            rec.l_atten = t.value_f64(a);
            weighted.push_back(t.mul_c(a, cfg.lambda_atten));
        }
        if (cfg.lambda_iden > 0.f) {
            Var i = mean_of(t, iden_terms);
            rec.l_iden = t.value_f64(i);
            weighted.push_back(t.mul_c(i, cfg.lambda_iden));
        }
        if (cfg.lambda_gray_feat > 0.f) {
            Var gf = mean_of(t, gray_terms);
            rec.l_gray_feat = t.value_f64(gf);
            weighted.push_back(t.mul_c(gf, cfg.lambda_gray_feat));
        }
        if (!weighted.empty()) {
            Var total = weighted[0];
            for (size_t i = 1; i < weighted.size(); ++i) total = total + weighted[i];
            t.backward(total);
        }
    }
    adam_step(gen_params, cfg.lr_gen);

    weights.global_step += 1;
    return rec;
}

std::vector<TrainRecord> train_on_samples(const std::vector<EffectsSample>& effects,
                                          const std::vector<Image>& effects_free, const FeatureExtractor& ext,
                                          const SuppressionConfig& cfg, SuppressionWeights& weights,
                                          std::ostream* log) {
    if (effects.empty()) throw ShapeError("train: no light-effects samples");
    if (effects_free.empty()) throw ShapeError("train: no light-effects-free samples");
    std::vector<TrainRecord> records;
    records.reserve(cfg.steps);
    if (log && cfg.steps > 0) *log << "step,L_adv_d,L_adv_g,L_atten,L_iden,L_gray_feat\n";
    for (int step = 0; step < cfg.steps; ++step) {
        std::mt19937 rng(static_cast<uint32_t>(mix_seed(cfg.seed, static_cast<uint64_t>(weights.global_step))));
        std::vector<EffectsSample> batch_e;
        std::vector<Image> batch_ef;
        for (int i = 0; i < cfg.batch; ++i) {
            const auto& src = effects[rng() % effects.size()];
            const int ch = std::min(cfg.crop, src.input.height), cw = std::min(cfg.crop, src.input.width);
            const int y0 = static_cast<int>(rng() % (src.input.height - ch + 1));
            const int x0 = static_cast<int>(rng() % (src.input.width - cw + 1));
            EffectsSample s;
            s.input = crop_image(src.input, y0, x0, ch, cw);
            s.J_init = crop_image(src.J_init, y0, x0, ch, cw);
            s.G = crop_image(src.G, y0, x0, ch, cw);
            s.I_gray3 = crop_image(src.I_gray3, y0, x0, ch, cw);
            batch_e.push_back(std::move(s));
        }
        for (int i = 0; i < cfg.batch; ++i) {
            const Image& src = effects_free[rng() % effects_free.size()];
            const int ch = std::min(cfg.crop, src.height), cw = std::min(cfg.crop, src.width);
            const int y0 = static_cast<int>(rng() % (src.height - ch + 1));
            const int x0 = static_cast<int>(rng() % (src.width - cw + 1));
            batch_ef.push_back(crop_image(src, y0, x0, ch, cw));
        }
        TrainRecord rec = train_step(batch_e, batch_ef, weights, ext, cfg);
        if (log) {
            char buf[192];
            std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(rec.step),
                          rec.l_adv_d, rec.l_adv_g, rec.l_atten, rec.l_iden, rec.l_gray_feat);
            *log << buf;
        }
        records.push_back(rec);
    }
    return records;
}

std::vector<std::string> list_images(const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") paths.push_back(entry.path().string());
    }
    if (paths.empty()) throw IoError("no images found in: " + dir);
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<TrainRecord> train_suppression(const std::string& effects_dir, const std::string& effects_free_dir,
                                           const SuppressionConfig& cfg, SuppressionWeights& weights,
                                           std::ostream* log) {
    std::vector<EffectsSample> effects;
    for (const auto& p : list_images(effects_dir)) effects.push_back(make_effects_sample(load_image(p), cfg.decomp));
    std::vector<Image> effects_free;
    for (const auto& p : list_images(effects_free_dir)) effects_free.push_back(load_image(p));

    std::unique_ptr<FeatureExtractor> ext;
    if (cfg.extractor_dir.empty())
        ext = std::make_unique<DefaultExtractor>(cfg.hf);
    else
        ext = std::make_unique<ConvStackExtractor>(ConvStackExtractor::load(cfg.extractor_dir));
    return train_on_samples(effects, effects_free, *ext, cfg, weights, log);
}

EnhanceResult enhance(const Image& I, SuppressionWeights& weights, EnhanceMode mode, const DecompConfig& dcfg) {
    EnhanceResult r;
    if (mode == EnhanceMode::suppress) {
        DecompResult d = decompose(I, dcfg);
        r.output = generator_forward(weights.gen, d.layers.J_init, d.layers.G);
        r.decomposition_used = true;
    } else {
        Image g0 = Image::create(I.height, I.width, 3, 0.f);
        r.output = generator_forward(weights.gen, I, g0);
        r.decomposition_used = false;
    }
    return r;
}

double classifier_accuracy(SuppressionWeights& weights, const std::vector<EffectsSample>& effects,
                           const std::vector<Image>& effects_free) {
    std::vector<DomainSample> samples;
    for (const auto& s : effects) samples.push_back({s.J_init, s.G, true});
    for (const auto& img : effects_free)
        samples.push_back({img, Image::create(img.height, img.width, 3, 0.f), false});

    int correct = 0;
    for (const auto& s : samples) {
        Tape t;
        ParamBinder c{t, false};
        GeneratorOut out = generator_forward_t(t, weights.gen, c, t.constant(image_to_tensor(s.image)),
                                               t.constant(image_to_tensor(s.guidance)));
        Var gamma = classifier_forward_t(t, weights.cls, c, out.bottleneck);
        correct += (t.value_f64(gamma) > 0.5) == s.has_effects ? 1 : 0;
    }
    return samples.empty() ? 0.0 : static_cast<double>(correct) / samples.size();
}

Image sample_attention_map(SuppressionWeights& weights, const DomainSample& sample) {
    Tape t;
    ParamBinder c{t, false};
    GeneratorOut out = generator_forward_t(t, weights.gen, c, t.constant(image_to_tensor(sample.image)),
                                           t.constant(image_to_tensor(sample.guidance)));
    Image coarse = attention_map(t.value(out.bottleneck), weights.cls);
    return resize_bilinear(coarse, sample.image.height, sample.image.width);
}

namespace {

void archive_param(WeightArchive& a, const Parameter& p) {
    a.add_tensor(p.name, p.value);
    a.add_tensor(p.name + ".adam_m", p.m);
    a.add_tensor(p.name + ".adam_v", p.v);
    a.add_tensor(p.name + ".adam_t", Tensor::scalar(static_cast<float>(p.step)));
}

void restore_param(const WeightArchive& a, Parameter& p) {
    Tensor v = a.tensor(p.name);
    if (!v.same_shape(p.value))
        throw IoError("archive entry " + p.name + " has shape " + v.shape_str() + ", expected " +
                      p.value.shape_str());
    p.value = std::move(v);
    p.m = a.tensor(p.name + ".adam_m");
    p.v = a.tensor(p.name + ".adam_v");
    p.step = static_cast<int64_t>(a.tensor(p.name + ".adam_t")[0]);
    p.zero_grad();
}

} // namespace

void save_weights(const SuppressionWeights& weights, const std::string& dir) {
    WeightArchive a;
    SuppressionWeights& w = const_cast<SuppressionWeights&>(weights);
    for (Parameter* p : w.gen.params()) archive_param(a, *p);
    for (Parameter* p : w.cls.params()) archive_param(a, *p);
    for (Parameter* p : w.dis.params()) archive_param(a, *p);
    a.add_tensor("meta.global_step", Tensor::scalar(static_cast<float>(weights.global_step)));
    save_archive(a, dir);
}

SuppressionWeights load_weights(const std::string& dir) {
    WeightArchive a = load_archive(dir);
    SuppressionWeights w = SuppressionWeights::init(0);
    for (Parameter* p : w.gen.params()) restore_param(a, *p);
    for (Parameter* p : w.cls.params()) restore_param(a, *p);
    for (Parameter* p : w.dis.params()) restore_param(a, *p);
    w.global_step = static_cast<int64_t>(a.tensor("meta.global_step")[0]);
    return w;
}

void write_train_log(const std::vector<TrainRecord>& records, std::ostream& os) {
    os << "step,L_adv_d,L_adv_g,L_atten,L_iden,L_gray_feat\n";
    char buf[192];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.l_adv_d,
                      r.l_adv_g, r.l_atten, r.l_iden, r.l_gray_feat);
        os << buf;
    }
}

} // namespace nightenh
