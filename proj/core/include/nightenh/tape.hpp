#pragma once

#include <cstdint>
#include <vector>

#include "nightenh/optim.hpp"
#include "nightenh/tensor.hpp"

namespace nightenh {

// Operation kinds recorded on a tape. Forward values are computed eagerly
// when a node is recorded; backward replays the node list in reverse.
enum class Op : uint8_t {
    Constant,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    AddC,        // x + f0
    MulC,        // x * f0
    Abs,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Square,
    Sigmoid,
    LeakyRelu,   // slope f0
    Clamp,       // [f0, f1]
    Sum,         // -> {1}
    Mean,        // -> {1}
    Scale,       // x * s, s a {1} node
    BroadcastCh, // {1,H,W} -> {i0,H,W}
    MeanCh,      // {C,H,W} -> {1,H,W}
    ConcatCh,
    SliceCh,     // channels [i0, i0+i1)
    Gap,         // {C,H,W} -> {C}
    Conv2d,      // stride i0, zero padding preserving extents at stride 1
    Down2,       // bilinear downsample by 2 (2x2 average, edge-replicated)
    Up2,         // nearest-neighbour upsample by 2
    MaxPool2,    // 2x2, stride 2
    PadReflect,  // top/bottom/left/right = i0/i1/i2/i3
    Crop,        // y0/x0/h/w = i0/i1/i2/i3
    GradX,       // forward difference, zero last column
    GradY,       // forward difference, zero last row
    BoxFilter,   // radius i0, window mean normalized by in-bounds count
};

const char* op_name(Op op);

struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    float f0 = 0.f, f1 = 0.f;
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    Tensor out;
    double scalar64 = 0.0;   // double mirror of {1}-shaped outputs
    bool has_scalar64 = false;
    std::vector<int> idx;    // argmax indices for MaxPool2
};

class Tape;

// Handle to a recorded node. Copyable; valid for the lifetime of its tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Single-owner recorded computation. Nodes reference strictly earlier nodes,
// so the list is already in topological order; backward() visits each node
// exactly once, in reverse. A tape may be differentiated once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor t);
    Var param(Parameter& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var add_c(Var a, float c);
    Var mul_c(Var a, float c);
    Var abs(Var a);
    Var tanh(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sqrt(Var a);
    Var square(Var a);
    Var sigmoid(Var a);
    Var leaky_relu(Var a, float slope);
    Var relu(Var a) { return leaky_relu(a, 0.f); }
    Var clamp(Var a, float lo, float hi);
    Var sum(Var a);
    Var mean(Var a);
    Var scale(Var a, Var s);
    Var broadcast_ch(Var a, int channels);
    Var mean_ch(Var a);
    Var concat_ch(Var a, Var b);
    Var slice_ch(Var a, int first, int count);
    Var gap(Var a);
    Var conv2d(Var x, Var w, Var bias, int stride);
    Var down2(Var a);
    Var up2(Var a);
    Var maxpool2(Var a);
    Var pad_reflect(Var a, int top, int bottom, int left, int right);
    Var crop(Var a, int y0, int x0, int h, int w);
    Var grad_x(Var a);
    Var grad_y(Var a);
    Var box_filter(Var a, int radius);

    // Accumulates d(loss)/d(value) into every registered Parameter's
    // gradient; intermediate gradients are released afterwards.
    void backward(Var loss);

    const Tensor& value(Var v) const;
    // Exact value of a {1}-shaped node; scalar chains are mirrored in double.
    double value_f64(Var v) const;

    int size() const { return static_cast<int>(nodes_.size()); }
    bool consumed() const { return consumed_; }

private:
    Var record(Node n);
    void check_open() const;
    Var unary(Op op, Var a, float f0 = 0.f, float f1 = 0.f);
    Var binary(Op op, Var a, Var b);

    std::vector<Node> nodes_;
    std::vector<Parameter*> params_; // per node; nullptr for non-parameters
    bool consumed_ = false;
};

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator+(Var a, float c) { return a.tape->add_c(a, c); }
inline Var operator*(Var a, float c) { return a.tape->mul_c(a, c); }
inline Var operator*(float c, Var a) { return a.tape->mul_c(a, c); }
inline Var operator-(Var a, float c) { return a.tape->add_c(a, -c); }

} // namespace nightenh
