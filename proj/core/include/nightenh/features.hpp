#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nightenh/guided_filter.hpp"
#include "nightenh/image.hpp"
#include "nightenh/tape.hpp"
#include "nightenh/weights_io.hpp"

namespace nightenh {

// Perceptual/structure feature source. extract() is deterministic for fixed
// weights and returns finite-valued maps. The taped form is what losses
// differentiate through; the Image form runs a scratch tape.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Var> extract(Tape& tape, Var img) const = 0;
    virtual std::string name() const = 0;

    std::vector<Field> extract(const Image& img) const;
};

// Weight-free default: the HF residual bank plus gradient magnitudes of the
// channel mean at three scales (full, /2, /4).
class DefaultExtractor final : public FeatureExtractor {
public:
    explicit DefaultExtractor(HFConfig cfg = {}) : cfg_(std::move(cfg)) {}
    using FeatureExtractor::extract;
    std::vector<Var> extract(Tape& tape, Var img) const override;
    std::string name() const override { return "default"; }

private:
    HFConfig cfg_;
};

// External-weights convolutional extractor. Evaluates the manifest's layers
// in order (conv: 3x3-or-other odd kernel, stride 1; relu; maxpool) and
// returns the final activation. No input normalization is applied.
class ConvStackExtractor final : public FeatureExtractor {
public:
    static ConvStackExtractor load(const std::string& dir);

    using FeatureExtractor::extract;
    std::vector<Var> extract(Tape& tape, Var img) const override;
    std::string name() const override { return "conv-stack"; }

    struct Layer {
        std::string name;
        std::string kind; // conv | relu | maxpool
        Tensor weight;    // {outC,inC,kH,kW}, conv only
        Tensor bias;      // {outC}, conv only
    };
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<Layer> layers_;
};

// L_gray-feat: mean |phi_HF(a) - phi_HF(b)| + mean |phi_ext(a) - phi_ext(b)|,
// each term averaged over every element of its concatenated maps.
Var gray_feat_loss_t(Var j_refine, Var i_gray3, const FeatureExtractor& ext, const HFConfig& cfg);
double gray_feat_loss(const Image& j_refine, const Image& i_gray3, const FeatureExtractor& ext, const HFConfig& cfg);

} // namespace nightenh
