#include "nightenh/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "nightenh/errors.hpp"

namespace nightenh {

Image load_image(const std::string& path) {
    cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw IoError("cannot read image: " + path);
    if (raw.depth() != CV_8U && raw.depth() != CV_16U)
        throw IoError("unsupported bit depth in " + path + " (expected 8- or 16-bit integer samples)");

    cv::Mat bgr;
    if (raw.channels() == 4)
        cv::cvtColor(raw, bgr, cv::COLOR_BGRA2BGR);
    else if (raw.channels() == 1 || raw.channels() == 3)
        bgr = raw;
    else
        throw IoError("unsupported channel count in " + path);

    const int c = bgr.channels();
    const bool eight = bgr.depth() == CV_8U;
    const float den = eight ? 255.f : 65535.f;
    Image img = Image::create(bgr.rows, bgr.cols, c);
    for (int y = 0; y < bgr.rows; ++y)
        for (int x = 0; x < bgr.cols; ++x)
            for (int k = 0; k < c; ++k) {
                // OpenCV stores BGR; flip to RGB.
                const int src = c == 3 ? 2 - k : 0;
                float v;
                if (eight)
                    v = c == 3 ? bgr.at<cv::Vec3b>(y, x)[src] : bgr.at<uint8_t>(y, x);
                else
                    v = c == 3 ? bgr.at<cv::Vec3w>(y, x)[src] : bgr.at<uint16_t>(y, x);
                img.at(y, x, k) = v / den;
            }
    return img;
}

void save_image(const Image& img, const std::string& path) {
    if (img.height < 1 || img.width < 1 || (img.channels != 1 && img.channels != 3))
        throw ShapeError("save_image: invalid image");
    cv::Mat out(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const float v = std::clamp(img.at(y, x, c), 0.f, 1.f);
                const auto b = static_cast<uint8_t>(std::lround(v * 255.f));
                if (img.channels == 3)
                    out.at<cv::Vec3b>(y, x)[2 - c] = b;
                else
                    out.at<uint8_t>(y, x) = b;
            }
    if (path.size() < 4 || path.substr(path.size() - 4) != ".png")
        throw IoError("save_image writes PNG only; path must end in .png: " + path);
    if (!cv::imwrite(path, out)) throw IoError("cannot write image: " + path);
}

} // namespace nightenh
