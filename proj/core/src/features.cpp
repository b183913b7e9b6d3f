#include "nightenh/features.hpp"

#include "nightenh/errors.hpp"

namespace nightenh {

std::vector<Field> FeatureExtractor::extract(const Image& img) const {
    Tape tape;
    Var in = tape.constant(image_to_tensor(img));
    std::vector<Var> maps = extract(tape, in);
    std::vector<Field> out;
    out.reserve(maps.size());
    for (Var m : maps) out.push_back(tensor_to_field(tape.value(m)));
    return out;
}

std::vector<Var> DefaultExtractor::extract(Tape& tape, Var img) const {
    std::vector<Var> maps = hf_features_t(img, cfg_);
    Var gray = tape.mean_ch(img);
    for (int scale = 0; scale < 3; ++scale) {
        Var gx = tape.grad_x(gray);
        Var gy = tape.grad_y(gray);
        maps.push_back(tape.sqrt(tape.square(gx) + tape.square(gy) + 1e-12f));
        if (scale < 2) gray = tape.down2(gray);
    }
    return maps;
}

ConvStackExtractor ConvStackExtractor::load(const std::string& dir) {
    WeightArchive archive = load_archive(dir);
    ConvStackExtractor ext;
    for (const auto& e : archive.entries) {
        Layer layer;
        layer.name = e.name;
        layer.kind = e.kind;
        if (e.kind == "conv") {
            if (e.shape.size() != 4)
                throw IoError("conv layer " + e.name + " needs a {outC,inC,kH,kW} shape");
            const int out_c = e.shape[0];
            const long long wn = static_cast<long long>(out_c) * e.shape[1] * e.shape[2] * e.shape[3];
            layer.weight = Tensor(e.shape, std::vector<float>(e.data.begin(), e.data.begin() + wn));
            layer.bias = Tensor({out_c}, std::vector<float>(e.data.begin() + wn, e.data.end()));
        } else if (e.kind != "relu" && e.kind != "maxpool") {
            throw IoError("unsupported extractor layer kind '" + e.kind + "' for " + e.name);
        }
        ext.layers_.push_back(std::move(layer));
    }
    if (ext.layers_.empty()) throw IoError("extractor archive has no layers: " + dir);
    return ext;
}

std::vector<Var> ConvStackExtractor::extract(Tape& tape, Var img) const {
    Var x = img;
    for (const auto& layer : layers_) {
        if (layer.kind == "conv")
            x = tape.conv2d(x, tape.constant(layer.weight), tape.constant(layer.bias), 1);
        else if (layer.kind == "relu")
            x = tape.relu(x);
        else
            x = tape.maxpool2(x);
    }
    return {x};
}

namespace {

// Sum of |a-b| over a list of paired maps, divided by the total element
// count; shapes must agree pairwise.
Var mean_abs_gap(Tape& tape, const std::vector<Var>& a, const std::vector<Var>& b) {
    if (a.size() != b.size()) throw ShapeError("feature map counts differ");
    Var acc{};
    long long total = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        Var term = tape.sum(tape.abs(a[i] - b[i]));
        acc = i == 0 ? term : acc + term;
        total += tape.value(a[i]).numel();
    }
    return tape.mul_c(acc, static_cast<float>(1.0 / static_cast<double>(total)));
}

} // namespace

Var gray_feat_loss_t(Var j_refine, Var i_gray3, const FeatureExtractor& ext, const HFConfig& cfg) {
    Tape& tape = *j_refine.tape;
    const Tensor& a = tape.value(j_refine);
    const Tensor& b = tape.value(i_gray3);
    if (!a.same_shape(b))
        throw ShapeError("gray_feat_loss: extents differ, " + a.shape_str() + " vs " + b.shape_str());
    Var hf = mean_abs_gap(tape, hf_features_t(j_refine, cfg), hf_features_t(i_gray3, cfg));
    Var pc = mean_abs_gap(tape, ext.extract(tape, j_refine), ext.extract(tape, i_gray3));
    return hf + pc;
}

double gray_feat_loss(const Image& j_refine, const Image& i_gray3, const FeatureExtractor& ext, const HFConfig& cfg) {
    Tape tape;
    Var a = tape.constant(image_to_tensor(j_refine));
    Var b = tape.constant(image_to_tensor(i_gray3));
    return tape.value_f64(gray_feat_loss_t(a, b, ext, cfg));
}

} // namespace nightenh
