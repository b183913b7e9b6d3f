#include "nightenh/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "nightenh/errors.hpp"

namespace nightenh {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

void require_rank3(const Tensor& t, const char* who) {
    if (t.shape().size() != 3)
        throw ShapeError(std::string(who) + ": expected a {C,H,W} tensor, got " + t.shape_str());
}

int reflect101(int t, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    t = ((t % period) + period) % period;
    return t < n ? t : period - t;
}

// Windowed (2r+1)^2 sum with zero outside the image, via a double-precision
// summed-area table.
void windowed_sum(const float* src, int h, int w, int r, float* dst) {
    std::vector<double> sat((h + 1) * (w + 1), 0.0);
    const int sw = w + 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            sat[(y + 1) * sw + (x + 1)] =
                static_cast<double>(src[y * w + x]) + sat[y * sw + (x + 1)] + sat[(y + 1) * sw + x] - sat[y * sw + x];
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
            const double s = sat[(y1 + 1) * sw + (x1 + 1)] - sat[y0 * sw + (x1 + 1)] - sat[(y1 + 1) * sw + x0] +
                             sat[y0 * sw + x0];
            dst[y * w + x] = static_cast<float>(s);
        }
    }
}

float box_count(int y, int x, int h, int w, int r) {
    const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
    const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
    return static_cast<float>(ny * nx);
}

struct ConvDims {
    int in_c, h, w, out_c, kh, kw, ph, pw, stride, out_h, out_w, k;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    require_rank3(x, "conv2d input");
    require(w.shape().size() == 4, "conv2d weight must be {outC,inC,kH,kW}, got " + w.shape_str());
    require(stride == 1 || stride == 2, "conv2d stride must be 1 or 2");
    ConvDims d;
    d.in_c = x.shape()[0];
    d.h = x.shape()[1];
    d.w = x.shape()[2];
    d.out_c = w.shape()[0];
    d.kh = w.shape()[2];
    d.kw = w.shape()[3];
    require(w.shape()[1] == d.in_c, "conv2d weight expects " + std::to_string(w.shape()[1]) + " input channels, input has " +
                                        std::to_string(d.in_c));
    require(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d kernel extents must be odd");
    require(b.shape() == std::vector<int>{d.out_c}, "conv2d bias must be {outC}, got " + b.shape_str());
    d.ph = (d.kh - 1) / 2;
    d.pw = (d.kw - 1) / 2;
    d.stride = stride;
    d.out_h = (d.h + 2 * d.ph - d.kh) / stride + 1;
    d.out_w = (d.w + 2 * d.pw - d.kw) / stride + 1;
    d.k = d.in_c * d.kh * d.kw;
    return d;
}

void im2col(const Tensor& x, const ConvDims& d, RowMat& col) {
    const int n = d.out_h * d.out_w;
    col.resize(d.k, n);
    for (int ic = 0; ic < d.in_c; ++ic)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                const int k = (ic * d.kh + ky) * d.kw + kx;
                float* row = col.data() + static_cast<long>(k) * n;
                for (int oy = 0; oy < d.out_h; ++oy) {
                    const int iy = oy * d.stride + ky - d.ph;
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const int ix = ox * d.stride + kx - d.pw;
                        row[oy * d.out_w + ox] =
                            (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w) ? x.at(ic, iy, ix) : 0.f;
                    }
                }
            }
}

void col2im_add(const RowMat& gcol, const ConvDims& d, Tensor& gx) {
    const int n = d.out_h * d.out_w;
    for (int ic = 0; ic < d.in_c; ++ic)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                const int k = (ic * d.kh + ky) * d.kw + kx;
                const float* row = gcol.data() + static_cast<long>(k) * n;
                for (int oy = 0; oy < d.out_h; ++oy) {
                    const int iy = oy * d.stride + ky - d.ph;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int ox = 0; ox < d.out_w; ++ox) {
                        const int ix = ox * d.stride + kx - d.pw;
                        if (ix >= 0 && ix < d.w) gx.at(ic, iy, ix) += row[oy * d.out_w + ox];
                    }
                }
            }
}

} // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Param: return "param";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::AddC: return "add_c";
        case Op::MulC: return "mul_c";
        case Op::Abs: return "abs";
        case Op::Tanh: return "tanh";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sqrt: return "sqrt";
        case Op::Square: return "square";
        case Op::Sigmoid: return "sigmoid";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Clamp: return "clamp";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Scale: return "scale";
        case Op::BroadcastCh: return "broadcast_ch";
        case Op::MeanCh: return "mean_ch";
        case Op::ConcatCh: return "concat_ch";
        case Op::SliceCh: return "slice_ch";
        case Op::Gap: return "gap";
        case Op::Conv2d: return "conv2d";
        case Op::Down2: return "down2";
        case Op::Up2: return "up2";
        case Op::MaxPool2: return "maxpool2";
        case Op::PadReflect: return "pad_reflect";
        case Op::Crop: return "crop";
        case Op::GradX: return "grad_x";
        case Op::GradY: return "grad_y";
        case Op::BoxFilter: return "box_filter";
    }
    return "?";
}

void Tape::check_open() const {
    if (consumed_) throw NumericError("tape already consumed by backward()");
}

Var Tape::record(Node n) {
    check_open();
    if (!n.out.all_finite())
        throw NumericError(std::string("non-finite values produced by ") + op_name(n.op));
    nodes_.push_back(std::move(n));
    params_.push_back(nullptr);
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    if (t.numel() == 1) {
        n.scalar64 = t[0];
        n.has_scalar64 = true;
    }
    n.out = std::move(t);
    return record(std::move(n));
}

Var Tape::param(Parameter& p) {
    Node n;
    n.op = Op::Param;
    n.out = p.value;
    if (n.out.numel() == 1) {
        n.scalar64 = n.out[0];
        n.has_scalar64 = true;
    }
    Var v = record(std::move(n));
    params_.back() = &p;
    return v;
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).out; }

double Tape::value_f64(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.out.numel() != 1) throw ShapeError("value_f64: node is not scalar");
    return n.has_scalar64 ? n.scalar64 : static_cast<double>(n.out[0]);
}

Var Tape::binary(Op op, Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    Tensor out(ta.shape());
    const int m = ta.numel();
    for (int i = 0; i < m; ++i) {
        switch (op) {
            case Op::Add: out[i] = ta[i] + tb[i]; break;
            case Op::Sub: out[i] = ta[i] - tb[i]; break;
            case Op::Mul: out[i] = ta[i] * tb[i]; break;
            case Op::Div: out[i] = ta[i] / tb[i]; break;
            default: break;
        }
    }
    if (m == 1) {
        const double xa = value_f64(a), xb = value_f64(b);
        switch (op) {
            case Op::Add: n.scalar64 = xa + xb; break;
            case Op::Sub: n.scalar64 = xa - xb; break;
            case Op::Mul: n.scalar64 = xa * xb; break;
            case Op::Div: n.scalar64 = xa / xb; break;
            default: break;
        }
        n.has_scalar64 = true;
    }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }

Var Tape::unary(Op op, Var a, float f0, float f1) {
    const Tensor& ta = value(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.f0 = f0;
    n.f1 = f1;
    Tensor out(ta.shape());
    const int m = ta.numel();
    auto f32 = [&](float x) -> float {
        switch (op) {
            case Op::AddC: return x + f0;
            case Op::MulC: return x * f0;
            case Op::Abs: return std::fabs(x);
            case Op::Tanh: return std::tanh(x);
            case Op::Exp: return std::exp(x);
            case Op::Log: return std::log(x);
            case Op::Sqrt: return std::sqrt(x);
            case Op::Square: return x * x;
            case Op::Sigmoid: return 1.f / (1.f + std::exp(-x));
            case Op::LeakyRelu: return x >= 0.f ? x : f0 * x;
            case Op::Clamp: return std::min(std::max(x, f0), f1);
            default: return x;
        }
    };
    for (int i = 0; i < m; ++i) out[i] = f32(ta[i]);
    if (m == 1) {
        const double x = value_f64(a);
        double y = 0;
        switch (op) {
            case Op::AddC: y = x + f0; break;
            case Op::MulC: y = x * static_cast<double>(f0); break;
            case Op::Abs: y = std::fabs(x); break;
            case Op::Tanh: y = std::tanh(x); break;
            case Op::Exp: y = std::exp(x); break;
            case Op::Log: y = std::log(x); break;
            case Op::Sqrt: y = std::sqrt(x); break;
            case Op::Square: y = x * x; break;
            case Op::Sigmoid: y = 1.0 / (1.0 + std::exp(-x)); break;
            case Op::LeakyRelu: y = x >= 0 ? x : f0 * x; break;
            case Op::Clamp: y = std::min(std::max(x, static_cast<double>(f0)), static_cast<double>(f1)); break;
            default: y = x; break;
        }
        n.scalar64 = y;
        n.has_scalar64 = true;
    }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::add_c(Var a, float c) { return unary(Op::AddC, a, c); }
Var Tape::mul_c(Var a, float c) { return unary(Op::MulC, a, c); }
Var Tape::abs(Var a) { return unary(Op::Abs, a); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::sqrt(Var a) { return unary(Op::Sqrt, a); }
Var Tape::square(Var a) { return unary(Op::Square, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::leaky_relu(Var a, float slope) { return unary(Op::LeakyRelu, a, slope); }

Var Tape::clamp(Var a, float lo, float hi) {
    if (lo > hi) throw ShapeError("clamp: lo > hi");
    return unary(Op::Clamp, a, lo, hi);
}

Var Tape::sum(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (int i = 0; i < ta.numel(); ++i) acc += ta[i];
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.out = Tensor::scalar(static_cast<float>(acc));
    n.scalar64 = acc;
    n.has_scalar64 = true;
    return record(std::move(n));
}

Var Tape::mean(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (int i = 0; i < ta.numel(); ++i) acc += ta[i];
    acc /= ta.numel();
    Node n;
    n.op = Op::Mean;
    n.a = a.id;
    n.out = Tensor::scalar(static_cast<float>(acc));
    n.scalar64 = acc;
    n.has_scalar64 = true;
    return record(std::move(n));
}

Var Tape::scale(Var a, Var s) {
    const Tensor& ta = value(a);
    const Tensor& ts = value(s);
    require(ts.numel() == 1, "scale: scale factor must be a {1} node, got " + ts.shape_str());
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.b = s.id;
    Tensor out(ta.shape());
    const float sv = ts[0];
    for (int i = 0; i < ta.numel(); ++i) out[i] = ta[i] * sv;
    if (ta.numel() == 1) {
        n.scalar64 = value_f64(a) * value_f64(s);
        n.has_scalar64 = true;
    }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::broadcast_ch(Var a, int channels) {
    const Tensor& ta = value(a);
    require_rank3(ta, "broadcast_ch");
    require(ta.shape()[0] == 1, "broadcast_ch: input must be single-channel, got " + ta.shape_str());
    require(channels >= 1, "broadcast_ch: channel count must be positive");
    Node n;
    n.op = Op::BroadcastCh;
    n.a = a.id;
    n.i0 = channels;
    Tensor out({channels, ta.shape()[1], ta.shape()[2]});
    const int hw = ta.shape()[1] * ta.shape()[2];
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < hw; ++i) out[c * hw + i] = ta[i];
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::mean_ch(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "mean_ch");
    const int c = ta.shape()[0], hw = ta.shape()[1] * ta.shape()[2];
    Node n;
    n.op = Op::MeanCh;
    n.a = a.id;
    Tensor out({1, ta.shape()[1], ta.shape()[2]});
    for (int i = 0; i < hw; ++i) {
        double acc = 0.0;
        for (int k = 0; k < c; ++k) acc += ta[k * hw + i];
        out[i] = static_cast<float>(acc / c);
    }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::concat_ch(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank3(ta, "concat_ch");
    require_rank3(tb, "concat_ch");
    require(ta.shape()[1] == tb.shape()[1] && ta.shape()[2] == tb.shape()[2],
            "concat_ch: spatial extents differ, " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::ConcatCh;
    n.a = a.id;
    n.b = b.id;
    Tensor out({ta.shape()[0] + tb.shape()[0], ta.shape()[1], ta.shape()[2]});
    std::copy(ta.data(), ta.data() + ta.numel(), out.data());
    std::copy(tb.data(), tb.data() + tb.numel(), out.data() + ta.numel());
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::slice_ch(Var a, int first, int count) {
    const Tensor& ta = value(a);
    require_rank3(ta, "slice_ch");
    require(first >= 0 && count >= 1 && first + count <= ta.shape()[0],
            "slice_ch: channel range out of bounds for " + ta.shape_str());
    Node n;
    n.op = Op::SliceCh;
    n.a = a.id;
    n.i0 = first;
    n.i1 = count;
    const int hw = ta.shape()[1] * ta.shape()[2];
    Tensor out({count, ta.shape()[1], ta.shape()[2]});
    std::copy(ta.data() + first * hw, ta.data() + (first + count) * hw, out.data());
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::gap(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "gap");
    const int c = ta.shape()[0], hw = ta.shape()[1] * ta.shape()[2];
    Node n;
    n.op = Op::Gap;
    n.a = a.id;
    Tensor out({c});
    for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += ta[k * hw + i];
        out[k] = static_cast<float>(acc / hw);
    }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::conv2d(Var x, Var w, Var bias, int stride) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(bias);
    const ConvDims d = conv_dims(tx, tw, tb, stride);
    Node n;
    n.op = Op::Conv2d;
    n.a = x.id;
    n.b = w.id;
    n.c = bias.id;
    n.i0 = stride;
    RowMat col;
    im2col(tx, d, col);
    Tensor out({d.out_c, d.out_h, d.out_w});
    ConstRowMap wm(tw.data(), d.out_c, d.k);
    RowMap om(out.data(), d.out_c, d.out_h * d.out_w);
    om.noalias() = wm * col;
    for (int oc = 0; oc < d.out_c; ++oc) om.row(oc).array() += tb[oc];
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::down2(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "down2");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Node n;
    n.op = Op::Down2;
    n.a = a.id;
    Tensor out({c, oh, ow});
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < oh; ++y) {
            const int y0 = 2 * y, y1 = std::min(2 * y + 1, h - 1);
            for (int x = 0; x < ow; ++x) {
                const int x0 = 2 * x, x1 = std::min(2 * x + 1, w - 1);
                out.at(k, y, x) = 0.25f * (ta.at(k, y0, x0) + ta.at(k, y0, x1) + ta.at(k, y1, x0) + ta.at(k, y1, x1));
            }
        }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::up2(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "up2");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    Node n;
    n.op = Op::Up2;
    n.a = a.id;
    Tensor out({c, 2 * h, 2 * w});
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) out.at(k, y, x) = ta.at(k, y / 2, x / 2);
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::maxpool2(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "maxpool2");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    require(h >= 2 && w >= 2, "maxpool2: input smaller than 2x2");
    const int oh = h / 2, ow = w / 2;
    Node n;
    n.op = Op::MaxPool2;
    n.a = a.id;
    Tensor out({c, oh, ow});
    n.idx.resize(static_cast<size_t>(c) * oh * ow);
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                int best = (k * h + 2 * y) * w + 2 * x;
                float bv = ta[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int i = (k * h + 2 * y + dy) * w + 2 * x + dx;
                        if (ta[i] > bv) {
                            bv = ta[i];
                            best = i;
                        }
                    }
                out.at(k, y, x) = bv;
                n.idx[(k * oh + y) * ow + x] = best;
            }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::pad_reflect(Var a, int top, int bottom, int left, int right) {
    const Tensor& ta = value(a);
    require_rank3(ta, "pad_reflect");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_reflect: negative padding");
    require(top < h && bottom < h && left < w && right < w, "pad_reflect: padding exceeds extent");
    Node n;
    n.op = Op::PadReflect;
    n.a = a.id;
    n.i0 = top;
    n.i1 = bottom;
    n.i2 = left;
    n.i3 = right;
    Tensor out({c, h + top + bottom, w + left + right});
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h + top + bottom; ++y) {
            const int sy = reflect101(y - top, h);
            for (int x = 0; x < w + left + right; ++x) out.at(k, y, x) = ta.at(k, sy, reflect101(x - left, w));
        }
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::crop(Var a, int y0, int x0, int h, int w) {
    const Tensor& ta = value(a);
    require_rank3(ta, "crop");
    require(y0 >= 0 && x0 >= 0 && h >= 1 && w >= 1 && y0 + h <= ta.shape()[1] && x0 + w <= ta.shape()[2],
            "crop: window out of bounds for " + ta.shape_str());
    Node n;
    n.op = Op::Crop;
    n.a = a.id;
    n.i0 = y0;
    n.i1 = x0;
    n.i2 = h;
    n.i3 = w;
    const int c = ta.shape()[0];
    Tensor out({c, h, w});
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(k, y, x) = ta.at(k, y0 + y, x0 + x);
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::grad_x(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "grad_x");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    Node n;
    n.op = Op::GradX;
    n.a = a.id;
    Tensor out(ta.shape());
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(k, y, x) = x + 1 < w ? ta.at(k, y, x + 1) - ta.at(k, y, x) : 0.f;
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::grad_y(Var a) {
    const Tensor& ta = value(a);
    require_rank3(ta, "grad_y");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    Node n;
    n.op = Op::GradY;
    n.a = a.id;
    Tensor out(ta.shape());
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(k, y, x) = y + 1 < h ? ta.at(k, y + 1, x) - ta.at(k, y, x) : 0.f;
    n.out = std::move(out);
    return record(std::move(n));
}

Var Tape::box_filter(Var a, int radius) {
    const Tensor& ta = value(a);
    require_rank3(ta, "box_filter");
    require(radius >= 1, "box_filter: radius must be >= 1");
    const int c = ta.shape()[0], h = ta.shape()[1], w = ta.shape()[2];
    Node n;
    n.op = Op::BoxFilter;
    n.a = a.id;
    n.i0 = radius;
    Tensor out(ta.shape());
    std::vector<float> sums(static_cast<size_t>(h) * w);
    for (int k = 0; k < c; ++k) {
        windowed_sum(ta.data() + static_cast<long>(k) * h * w, h, w, radius, sums.data());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(k, y, x) = sums[y * w + x] / box_count(y, x, h, w, radius);
    }
    n.out = std::move(out);
    return record(std::move(n));
}

void Tape::backward(Var loss) {
    if (consumed_) throw NumericError("tape already consumed by backward()");
    if (loss.tape != this || loss.id < 0 || loss.id >= size()) throw ShapeError("backward: loss node not on this tape");
    if (nodes_[loss.id].out.numel() != 1)
        throw NumericError("backward: loss must be scalar, got " + nodes_[loss.id].out.shape_str());
    consumed_ = true;

    std::vector<Tensor> grads(nodes_.size());
    auto g = [&](int id) -> Tensor& {
        if (grads[id].empty()) grads[id] = Tensor(nodes_[id].out.shape());
        return grads[id];
    };
    g(loss.id)[0] = 1.f;

    for (int id = loss.id; id >= 0; --id) {
        if (grads[id].empty()) continue;
        const Node& n = nodes_[id];
        const Tensor& go = grads[id];
        const int m = n.out.numel();
        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::Add: {
                Tensor &ga = g(n.a), &gb = g(n.b);
                for (int i = 0; i < m; ++i) {
                    ga[i] += go[i];
                    gb[i] += go[i];
                }
                break;
            }
            case Op::Sub: {
                Tensor &ga = g(n.a), &gb = g(n.b);
                for (int i = 0; i < m; ++i) {
                    ga[i] += go[i];
                    gb[i] -= go[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor &va = nodes_[n.a].out, &vb = nodes_[n.b].out;
                Tensor &ga = g(n.a), &gb = g(n.b);
                for (int i = 0; i < m; ++i) {
                    ga[i] += go[i] * vb[i];
                    gb[i] += go[i] * va[i];
                }
                break;
            }
            case Op::Div: {
                const Tensor &va = nodes_[n.a].out, &vb = nodes_[n.b].out;
                Tensor &ga = g(n.a), &gb = g(n.b);
                for (int i = 0; i < m; ++i) {
                    ga[i] += go[i] / vb[i];
                    gb[i] -= go[i] * va[i] / (vb[i] * vb[i]);
                }
                break;
            }
            case Op::AddC: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i];
                break;
            }
            case Op::MulC: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * n.f0;
                break;
            }
            case Op::Abs: {
                const Tensor& va = nodes_[n.a].out;
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += va[i] > 0.f ? go[i] : (va[i] < 0.f ? -go[i] : 0.f);
                break;
            }
            case Op::Tanh: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * (1.f - n.out[i] * n.out[i]);
                break;
            }
            case Op::Exp: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * n.out[i];
                break;
            }
            case Op::Log: {
                const Tensor& va = nodes_[n.a].out;
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] / va[i];
                break;
            }
            case Op::Sqrt: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * 0.5f / std::max(n.out[i], 1e-12f);
                break;
            }
            case Op::Square: {
                const Tensor& va = nodes_[n.a].out;
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * 2.f * va[i];
                break;
            }
            case Op::Sigmoid: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += go[i] * n.out[i] * (1.f - n.out[i]);
                break;
            }
            case Op::LeakyRelu: {
                const Tensor& va = nodes_[n.a].out;
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[i] += va[i] >= 0.f ? go[i] : n.f0 * go[i];
                break;
            }
            case Op::Clamp: {
                const Tensor& va = nodes_[n.a].out;
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i)
                    if (va[i] >= n.f0 && va[i] <= n.f1) ga[i] += go[i];
                break;
            }
            case Op::Sum: {
                Tensor& ga = g(n.a);
                const float s = go[0];
                for (int i = 0; i < ga.numel(); ++i) ga[i] += s;
                break;
            }
            case Op::Mean: {
                Tensor& ga = g(n.a);
                const float s = go[0] / ga.numel();
                for (int i = 0; i < ga.numel(); ++i) ga[i] += s;
                break;
            }
            case Op::Scale: {
                const Tensor& va = nodes_[n.a].out;
                const float sv = nodes_[n.b].out[0];
                Tensor &ga = g(n.a), &gs = g(n.b);
                double acc = 0.0;
                for (int i = 0; i < m; ++i) {
                    ga[i] += go[i] * sv;
                    acc += static_cast<double>(go[i]) * va[i];
                }
                gs[0] += static_cast<float>(acc);
                break;
            }
            case Op::BroadcastCh: {
                Tensor& ga = g(n.a);
                const int hw = ga.numel();
                for (int c = 0; c < n.i0; ++c)
                    for (int i = 0; i < hw; ++i) ga[i] += go[c * hw + i];
                break;
            }
            case Op::MeanCh: {
                Tensor& ga = g(n.a);
                const int c = nodes_[n.a].out.shape()[0];
                const int hw = m;
                for (int k = 0; k < c; ++k)
                    for (int i = 0; i < hw; ++i) ga[k * hw + i] += go[i] / c;
                break;
            }
            case Op::ConcatCh: {
                Tensor &ga = g(n.a), &gb = g(n.b);
                for (int i = 0; i < ga.numel(); ++i) ga[i] += go[i];
                for (int i = 0; i < gb.numel(); ++i) gb[i] += go[ga.numel() + i];
                break;
            }
            case Op::SliceCh: {
                Tensor& ga = g(n.a);
                const int hw = nodes_[n.a].out.shape()[1] * nodes_[n.a].out.shape()[2];
                for (int i = 0; i < m; ++i) ga[n.i0 * hw + i] += go[i];
                break;
            }
            case Op::Gap: {
                Tensor& ga = g(n.a);
                const int hw = nodes_[n.a].out.shape()[1] * nodes_[n.a].out.shape()[2];
                for (int k = 0; k < m; ++k) {
                    const float s = go[k] / hw;
                    for (int i = 0; i < hw; ++i) ga[k * hw + i] += s;
                }
                break;
            }
            case Op::Conv2d: {
                const Tensor& tx = nodes_[n.a].out;
                const Tensor& tw = nodes_[n.b].out;
                const Tensor& tb = nodes_[n.c].out;
                const ConvDims d = conv_dims(tx, tw, tb, n.i0);
                const int nn = d.out_h * d.out_w;
                Tensor &gx = g(n.a), &gw = g(n.b), &gb = g(n.c);
                ConstRowMap gom(go.data(), d.out_c, nn);
                for (int oc = 0; oc < d.out_c; ++oc) gb[oc] += gom.row(oc).sum();
                RowMat col;
                im2col(tx, d, col);
                RowMap gwm(gw.data(), d.out_c, d.k);
                gwm.noalias() += gom * col.transpose();
                ConstRowMap wm(tw.data(), d.out_c, d.k);
                RowMat gcol = wm.transpose() * gom;
                col2im_add(gcol, d, gx);
                break;
            }
            case Op::Down2: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                const int oh = n.out.shape()[1], ow = n.out.shape()[2];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y < oh; ++y) {
                        const int y0 = 2 * y, y1 = std::min(2 * y + 1, h - 1);
                        for (int x = 0; x < ow; ++x) {
                            const int x0 = 2 * x, x1 = std::min(2 * x + 1, w - 1);
                            const float s = 0.25f * go.at(k, y, x);
                            ga.at(k, y0, x0) += s;
                            ga.at(k, y0, x1) += s;
                            ga.at(k, y1, x0) += s;
                            ga.at(k, y1, x1) += s;
                        }
                    }
                break;
            }
            case Op::Up2: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y < 2 * h; ++y)
                        for (int x = 0; x < 2 * w; ++x) ga.at(k, y / 2, x / 2) += go.at(k, y, x);
                break;
            }
            case Op::MaxPool2: {
                Tensor& ga = g(n.a);
                for (int i = 0; i < m; ++i) ga[n.idx[i]] += go[i];
                break;
            }
            case Op::PadReflect: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                const int oh = n.out.shape()[1], ow = n.out.shape()[2];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y < oh; ++y) {
                        const int sy = reflect101(y - n.i0, h);
                        for (int x = 0; x < ow; ++x) ga.at(k, sy, reflect101(x - n.i2, w)) += go.at(k, y, x);
                    }
                break;
            }
            case Op::Crop: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y < n.i2; ++y)
                        for (int x = 0; x < n.i3; ++x) ga.at(k, n.i0 + y, n.i1 + x) += go.at(k, y, x);
                break;
            }
            case Op::GradX: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x + 1 < w; ++x) {
                            const float s = go.at(k, y, x);
                            ga.at(k, y, x + 1) += s;
                            ga.at(k, y, x) -= s;
                        }
                break;
            }
            case Op::GradY: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                for (int k = 0; k < c; ++k)
                    for (int y = 0; y + 1 < h; ++y)
                        for (int x = 0; x < w; ++x) {
                            const float s = go.at(k, y, x);
                            ga.at(k, y + 1, x) += s;
                            ga.at(k, y, x) -= s;
                        }
                break;
            }
            case Op::BoxFilter: {
                Tensor& ga = g(n.a);
                const int c = ga.shape()[0], h = ga.shape()[1], w = ga.shape()[2];
                std::vector<float> scaled(static_cast<size_t>(h) * w);
                std::vector<float> sums(static_cast<size_t>(h) * w);
                for (int k = 0; k < c; ++k) {
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x)
                            scaled[y * w + x] = go.at(k, y, x) / box_count(y, x, h, w, n.i0);
                    windowed_sum(scaled.data(), h, w, n.i0, sums.data());
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) ga.at(k, y, x) += sums[y * w + x];
                }
                break;
            }
        }
        // Release this node's gradient before moving on; parameters keep
        // theirs via the accumulation below.
        if (params_[id]) {
            Parameter* p = params_[id];
            for (int i = 0; i < grads[id].numel(); ++i) p->grad[i] += grads[id][i];
        }
        grads[id] = Tensor();
    }
}

} // namespace nightenh
