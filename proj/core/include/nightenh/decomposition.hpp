#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nightenh/image.hpp"
#include "nightenh/tape.hpp"

namespace nightenh {

// Decomposition of a night image under I = R (.) L + G: reflectance R,
// single-channel shading L, light-effects layer G, and the background
// estimate J_init = R (.) L, always recomputed from R and L.
struct LayerSet {
    Image R;
    Image L;
    Image G;
    Image J_init;
};

struct DecompConfig {
    float lambda_init = 1.f;
    float lambda_excl = 1.f;
    float lambda_recon = 0.1f;
    float lambda_cc = 0.5f;
    int iterations = 800;
    float lr = 0.05f;
    int n_scales = 3;    // multi-scale depth of the exclusion loss
    float eps0 = 1e-6f;  // normalization guard in the exclusion loss
    uint32_t seed = 0;
    float mu_init = 0.05f; // relative-smoothness weight for the G initializer
    int init_iters = 20;   // half-quadratic iterations for the G initializer
};

struct TraceRow {
    int iteration;
    double l_init, l_excl, l_cc, l_recon, total;
};

struct DecompResult {
    LayerSet layers;
    std::vector<TraceRow> trace;
};

// Shading initializer L_i: per-pixel max over the color channels.
Image init_shading(const Image& I);

// Light-effects initializer G_i via relative smoothness: per channel,
//   argmin_G ||lap(G)||^2 + mu |grad(I - G)|_1
// by half-quadratic splitting (closed-form frequency-domain G-step,
// soft-threshold shrinkage step), returning the best iterate by objective
// value, finally clamped to 0 <= G <= I.
Image init_light_effects(const Image& I, float mu = 0.05f, int iters = 20);

// Unsupervised decomposition losses (all L1 terms mean-reduced).
double loss_init(const Image& G, const Image& L, const Image& G_i, const Image& L_i);
double loss_excl(const Image& G, const Image& J_init, int n_max = 3, float eps0 = 1e-6f);
double loss_cc(const Image& J_init);
double loss_recon(const Image& I, const Image& R, const Image& L, const Image& G);

// Taped builders shared by decompose() and the gradient checks. All layer
// nodes are {C,H,W}; L is {1,H,W} and broadcast where needed.
Var loss_init_t(Var G, Var L, Var G_i, Var L_i);
Var loss_excl_t(Var G, Var J_init, int n_max, float eps0);
Var loss_cc_t(Var J_init);
Var loss_recon_t(Var I, Var R, Var L, Var G);

// Weighted total over sigmoid-parameterized layers; exposed so finite
// difference checks can evaluate the exact objective decompose() minimizes.
struct DecompObjective {
    Var total, l_init, l_excl, l_cc, l_recon;
    Var R, L, G, J;
};
DecompObjective decomp_objective_t(Tape& tape, Var r_hat, Var l_hat, Var g_hat, const Tensor& I, const Tensor& G_i,
                                   const Tensor& L_i, const DecompConfig& cfg);

// Per-image optimization of the four-loss objective over unconstrained
// fields r_hat, l_hat, g_hat with R = sigmoid(r_hat) etc. Returns the best
// iterate by total loss and the full loss trace.
DecompResult decompose(const Image& I, const DecompConfig& cfg = {});

// Comma-separated trace: iteration, L_init, L_excl, L_cc, L_recon, total.
void write_trace(const std::vector<TraceRow>& trace, std::ostream& os);

} // namespace nightenh
