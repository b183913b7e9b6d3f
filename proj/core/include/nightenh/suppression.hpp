#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nightenh/decomposition.hpp"
#include "nightenh/features.hpp"
#include "nightenh/networks.hpp"

namespace nightenh {

struct SuppressionConfig {
    float lambda_gray_feat = 1.f;
    float lambda_atten = 0.5f;
    float lambda_adv = 1.f;
    float lambda_iden = 5.f;
    float lr_gen = 2e-4f;  // generator and classifier
    float lr_disc = 1e-4f; // discriminator
    int steps = 2000;
    int crop = 128;
    int batch = 2;
    uint32_t seed = 0;
    bool least_squares_gan = false; // log-form adversarial loss by default
    HFConfig hf;
    DecompConfig decomp;
    std::string extractor_dir; // optional conv-stack weights; empty = default extractor
};

struct SuppressionWeights {
    GeneratorWeights gen;
    ClassifierWeights cls;
    DiscriminatorWeights dis;
    int64_t global_step = 0;

    static SuppressionWeights init(uint32_t seed);
};

// One light-effects training sample: the original input, its decomposition
// outputs, and the adaptive-fusion gray anchor replicated to 3 channels.
struct EffectsSample {
    Image input;
    Image J_init;
    Image G;
    Image I_gray3;
};

EffectsSample make_effects_sample(const Image& I, const DecompConfig& cfg);

struct TrainRecord {
    int64_t step;
    double l_adv_d, l_adv_g, l_atten, l_iden, l_gray_feat;
};

// Attention loss on clamped classifier outputs:
//   -(E[log gamma_e] + E[log(1 - gamma_ef)]).
double loss_atten(double gamma_e, double gamma_ef);
Var loss_atten_t(Tape& tape, const std::vector<Var>& gamma_e, const std::vector<Var>& gamma_ef);

// Standard adversarial objective on clamped sigmoid outputs.
// disc_objective = E[log D(J_ef)] + E[log(1 - D(J_refine))] (maximized by the
// discriminator); gen_loss is the non-saturating -E[log D(J_refine)].
struct AdvLosses {
    double disc_objective;
    double gen_loss;
};
AdvLosses loss_adv(const std::vector<double>& d_ef, const std::vector<double>& d_refine);

// Identity loss: mean |gen(f_ef) - J_ef|.
double loss_iden(const Image& generated, const Image& j_ef);

// One unpaired update: (1) discriminator on the (lambda_adv-scaled)
// adversarial loss; (2) generator + classifier on
// lambda_adv L_adv^gen + lambda_atten L_atten + lambda_iden L_iden +
// lambda_gray_feat L_gray-feat. Both optimizers step every call, so step
// counters advance even when every weight is zero.
TrainRecord train_step(const std::vector<EffectsSample>& batch_e, const std::vector<Image>& batch_ef,
                       SuppressionWeights& weights, const FeatureExtractor& ext, const SuppressionConfig& cfg);

// Full loop over random crops drawn with a per-step counter-seeded RNG, so a
// checkpointed run resumes exactly. Writes one comma-separated record per
// step to `log` when given.
std::vector<TrainRecord> train_on_samples(const std::vector<EffectsSample>& effects,
                                          const std::vector<Image>& effects_free, const FeatureExtractor& ext,
                                          const SuppressionConfig& cfg, SuppressionWeights& weights,
                                          std::ostream* log = nullptr);

// Reads both folders (PNG/JPEG, sorted by filename), decomposes every
// effects image, then trains.
std::vector<TrainRecord> train_suppression(const std::string& effects_dir, const std::string& effects_free_dir,
                                           const SuppressionConfig& cfg, SuppressionWeights& weights,
                                           std::ostream* log = nullptr);

enum class EnhanceMode { suppress, lowlight };

struct EnhanceResult {
    Image output;
    bool decomposition_used;
};

// suppress: decompose then refine (G, J_init); lowlight: refine (G0, I)
// directly, skipping decomposition.
EnhanceResult enhance(const Image& I, SuppressionWeights& weights, EnhanceMode mode, const DecompConfig& dcfg = {});

// Fraction of samples the classifier assigns to the correct domain.
double classifier_accuracy(SuppressionWeights& weights, const std::vector<EffectsSample>& effects,
                           const std::vector<Image>& effects_free);

// Diagnostic CAM-style attention map of a sample, upsampled to its extent.
Image sample_attention_map(SuppressionWeights& weights, const DomainSample& sample);

// Checkpoint archive: every parameter tensor plus its Adam state and the
// global step, in the manifest + flat-binary format.
void save_weights(const SuppressionWeights& weights, const std::string& dir);
SuppressionWeights load_weights(const std::string& dir);

void write_train_log(const std::vector<TrainRecord>& records, std::ostream& os);

// Sorted image paths (.png/.jpg/.jpeg) in a directory; errors name the
// directory when it is unreadable or empty.
std::vector<std::string> list_images(const std::string& dir);

} // namespace nightenh
