#pragma once

#include <cstdint>
#include <vector>

#include "nightenh/image.hpp"
#include "nightenh/optim.hpp"
#include "nightenh/tape.hpp"

namespace nightenh {

struct ConvLayer {
    Parameter w, b;

    ConvLayer() = default;
    ConvLayer(const std::string& name, int out_c, int in_c, int k, uint32_t seed);
    void collect(std::vector<Parameter*>& out);
};

// Binds network parameters onto a tape either as trainable parameters or as
// detached constants, so one forward definition serves both update phases.
struct ParamBinder {
    Tape& tape;
    bool trainable;

    Var operator()(Parameter& p) { return trainable ? tape.param(p) : tape.constant(p.value); }
};

// Encoder-decoder generator with light-effects guidance. Encoder: three
// stride-2 3x3 conv blocks (16/32/64 channels, leaky rectifier); bottleneck:
// two 64-channel residual blocks; decoder: mirrored nearest-neighbour
// upsample + conv blocks; head: 3-channel conv + sigmoid. At every encoder
// and decoder scale the features are multiplied by
// (1 + mean-over-channels(resized guidance)).
struct GeneratorWeights {
    ConvLayer enc1, enc2, enc3;
    ConvLayer res1a, res1b, res2a, res2b;
    ConvLayer dec1, dec2, dec3;
    ConvLayer head;

    static GeneratorWeights init(uint32_t seed);
    std::vector<Parameter*> params();
};

// Domain classifier over bottleneck features: global average pooling,
// per-channel weights + bias, sigmoid.
struct ClassifierWeights {
    Parameter w, b;

    static ClassifierWeights init(uint32_t seed, int channels = 64);
    std::vector<Parameter*> params();
};

// Patch discriminator: four stride-2 3x3 conv blocks (16/32/64/128) and a
// 1-channel logit head.
struct DiscriminatorWeights {
    ConvLayer c1, c2, c3, c4, head;

    static DiscriminatorWeights init(uint32_t seed);
    std::vector<Parameter*> params();
};

// An unpaired-training sample: the image fed to the generator and its
// guidance layer (the decomposed G, or an all-zero G0 for the
// light-effects-free domain).
struct DomainSample {
    Image image;
    Image guidance;
    bool has_effects = false;
};

struct GeneratorOut {
    Var output;     // {3,H,W}, sigmoid range
    Var bottleneck; // {64,H/8,W/8}
};

// Taped generator forward. image and guidance are {3,H,W} nodes with equal
// extents; extents not divisible by 8 are reflect-padded internally and the
// output cropped back. `modulated = false` disables the guidance
// multiplication (the unmodulated network).
GeneratorOut generator_forward_t(Tape& tape, GeneratorWeights& gw, ParamBinder bind, Var image, Var guidance,
                                 bool modulated = true);

// Inference wrapper on plain images.
Image generator_forward(GeneratorWeights& gw, const Image& image, const Image& guidance, bool modulated = true);

// Classifier output in (0,1) for a {C,h,w} bottleneck node.
Var classifier_forward_t(Tape& tape, ClassifierWeights& cw, ParamBinder bind, Var bottleneck);

// Patch logits {1,h,w} for a {3,H,W} image node.
Var discriminator_forward_t(Tape& tape, DiscriminatorWeights& dw, ParamBinder bind, Var image);

// Diagnostic CAM-style map: per-pixel mean of classifier-weighted feature
// maps, min-max normalized to [0,1] (constant maps become all zeros).
Image attention_map(const Tensor& bottleneck, const ClassifierWeights& cw);

} // namespace nightenh
