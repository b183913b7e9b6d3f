#include "nightenh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "nightenh/errors.hpp"
#include "nightenh/image_io.hpp"

namespace fs = std::filesystem;

namespace nightenh {

double mse(const Image& a, const Image& b) {
    if (!a.same_extent(b)) throw ShapeError("mse: extents differ");
    double acc = 0.0;
    for (int i = 0; i < a.sample_count(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return acc / a.sample_count();
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

namespace {

std::vector<double> luma_of(const Image& img) {
    std::vector<double> out(static_cast<size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out[y * img.width + x] =
                img.channels == 1 ? img.at(y, x, 0)
                                  : 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    return out;
}

} // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_extent(b)) throw ShapeError("ssim: extents differ");
    constexpr int kWin = 11, kHalf = kWin / 2;
    if (a.height < kWin || a.width < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");

    double win[kWin][kWin];
    double wsum = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            const double dy = y - kHalf, dx = x - kHalf;
            win[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += win[y][x];
        }
    for (auto& row : win)
        for (double& v : row) v /= wsum;

    const std::vector<double> la = luma_of(a), lb = luma_of(b);
    const int h = a.height, w = a.width;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0.0;
    long count = 0;
    for (int y = kHalf; y < h - kHalf; ++y)
        for (int x = kHalf; x < w - kHalf; ++x) {
            double mua = 0, mub = 0, sa = 0, sb = 0, sab = 0;
            for (int dy = -kHalf; dy <= kHalf; ++dy)
                for (int dx = -kHalf; dx <= kHalf; ++dx) {
                    const double wv = win[dy + kHalf][dx + kHalf];
                    const double va = la[(y + dy) * w + x + dx], vb = lb[(y + dy) * w + x + dx];
                    mua += wv * va;
                    mub += wv * vb;
                    sa += wv * va * va;
                    sb += wv * vb * vb;
                    sab += wv * va * vb;
                }
            sa -= mua * mua;
            sb -= mub * mub;
            sab -= mua * mub;
            const double num = (2 * mua * mub + c1) * (2 * sab + c2);
            const double den = (mua * mua + mub * mub + c1) * (sa + sb + c2);
            acc += num / den;
            ++count;
        }
    return acc / count;
}

EvalReport eval_dataset(const std::string& pred_dir, const std::string& gt_dir) {
    std::error_code ec;
    if (!fs::is_directory(pred_dir, ec)) throw IoError("not a readable directory: " + pred_dir);
    if (!fs::is_directory(gt_dir, ec)) throw IoError("not a readable directory: " + gt_dir);

    auto names_of = [](const std::string& dir) {
        std::map<std::string, std::string> out; // filename -> path
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out[e.path().filename().string()] = e.path().string();
        }
        return out;
    };
    const auto preds = names_of(pred_dir);
    const auto gts = names_of(gt_dir);

    EvalReport report;
    report.pred_dir = pred_dir;
    report.gt_dir = gt_dir;
    for (const auto& [name, path] : preds) {
        auto it = gts.find(name);
        if (it == gts.end()) {
            report.unmatched.push_back(name + " (no ground truth)");
            continue;
        }
        const Image p = load_image(path);
        const Image g = load_image(it->second);
        report.rows.push_back({name, psnr(p, g), ssim(p, g), mse(p, g)});
    }
    for (const auto& [name, path] : gts)
        if (!preds.count(name)) report.unmatched.push_back(name + " (no prediction)");

    const size_t n = report.rows.size();
    if (n > 0) {
        for (const auto& r : report.rows) {
            report.mean.psnr += r.psnr / n;
            report.mean.ssim += r.ssim / n;
            report.mean.mse += r.mse / n;
        }
        for (const auto& r : report.rows) {
            const double dp = r.psnr - report.mean.psnr, ds = r.ssim - report.mean.ssim, dm = r.mse - report.mean.mse;
            report.stddev.psnr += dp * dp / n;
            report.stddev.ssim += ds * ds / n;
            report.stddev.mse += dm * dm / n;
        }
        report.stddev.psnr = std::sqrt(report.stddev.psnr);
        report.stddev.ssim = std::sqrt(report.stddev.ssim);
        report.stddev.mse = std::sqrt(report.stddev.mse);
    }
    return report;
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan"; // e.g. the spread of infinite PSNR rows
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

void write_report(const EvalReport& report, std::ostream& os) {
    os << "name,psnr,ssim,mse\n";
    for (const auto& r : report.rows)
        os << r.name << ',' << num(r.psnr) << ',' << num(r.ssim) << ',' << num(r.mse) << '\n';
    os << "mean," << num(report.mean.psnr) << ',' << num(report.mean.ssim) << ',' << num(report.mean.mse) << '\n';
    os << "std," << num(report.stddev.psnr) << ',' << num(report.stddev.ssim) << ',' << num(report.stddev.mse) << '\n';
    for (const auto& u : report.unmatched) os << "# unmatched: " << u << '\n';
    if (!report.pred_dir.empty()) os << "# pred: " << report.pred_dir << '\n';
    if (!report.gt_dir.empty()) os << "# gt: " << report.gt_dir << '\n';
}

std::string format_report_summary(const EvalReport& report) {
    std::ostringstream os;
    os << report.rows.size() << " pairs evaluated";
    if (!report.rows.empty())
        os << "; mean PSNR " << num(report.mean.psnr) << " dB, mean SSIM " << num(report.mean.ssim) << ", mean MSE "
           << num(report.mean.mse);
    if (!report.unmatched.empty()) os << "; " << report.unmatched.size() << " unmatched file(s)";
    return os.str();
}

} // namespace nightenh
