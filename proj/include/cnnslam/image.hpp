#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cnnslam/errors.hpp"
#include "cnnslam/geometry.hpp"

namespace cnnslam {

/// Dense row-major scalar grid. Used for intensity (range [0,1]), depth (m)
/// and uncertainty (m^2) maps. Depth value <= 0 marks an invalid pixel.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width_(w), height_(h), data_(static_cast<size_t>(w) * h, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    const std::vector<T>& values() const { return data_; }
    std::vector<T>& values() { return data_; }

    bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

    bool same_size(const Grid& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using IntensityImage = Grid<float>;
using DepthMap = Grid<float>;
using UncertaintyMap = Grid<float>;
using LabelMap = Grid<uint8_t>;

/// Bilinear sample; valid for u in [0, w-1] x [0, h-1].
inline double sample_bilinear(const Grid<float>& img, const PixelCoord& u) {
    if (u.x < 0 || u.y < 0 || u.x > img.width() - 1 || u.y > img.height() - 1)
        throw OutOfBounds("bilinear sample outside image");
    int x0 = std::min(static_cast<int>(u.x), img.width() - 2);
    int y0 = std::min(static_cast<int>(u.y), img.height() - 2);
    if (img.width() == 1) x0 = 0;
    if (img.height() == 1) y0 = 0;
    double wx = u.x - x0, wy = u.y - y0;
    int x1 = std::min(x0 + 1, img.width() - 1);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double a = img.at(x0, y0), b = img.at(x1, y0);
    double c = img.at(x0, y1), d = img.at(x1, y1);
    return (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
}

/// Gradient of the bilinear interpolant at u. Exact for the interpolant,
/// which keeps analytic Jacobians consistent with finite differences.
inline Vec2 sample_bilinear_gradient(const Grid<float>& img, const PixelCoord& u) {
    if (u.x < 0 || u.y < 0 || u.x > img.width() - 1 || u.y > img.height() - 1)
        throw OutOfBounds("bilinear gradient outside image");
    int x0 = std::min(static_cast<int>(u.x), img.width() - 2);
    int y0 = std::min(static_cast<int>(u.y), img.height() - 2);
    if (img.width() == 1) x0 = 0;
    if (img.height() == 1) y0 = 0;
    double wx = u.x - x0, wy = u.y - y0;
    int x1 = std::min(x0 + 1, img.width() - 1);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double a = img.at(x0, y0), b = img.at(x1, y0);
    double c = img.at(x0, y1), d = img.at(x1, y1);
    double gx = (1 - wy) * (b - a) + wy * (d - c);
    double gy = (1 - wx) * (c - a) + wx * (d - b);
    return {gx, gy};
}

struct GradientMap {
    Grid<float> gx, gy, magnitude;
};

/// Central-difference gradients; border pixels get zero gradient.
inline GradientMap compute_gradients(const IntensityImage& img) {
    GradientMap g;
    g.gx = Grid<float>(img.width(), img.height(), 0.f);
    g.gy = Grid<float>(img.width(), img.height(), 0.f);
    g.magnitude = Grid<float>(img.width(), img.height(), 0.f);
    for (int y = 1; y < img.height() - 1; ++y) {
        for (int x = 1; x < img.width() - 1; ++x) {
            float dx = 0.5f * (img.at(x + 1, y) - img.at(x - 1, y));
            float dy = 0.5f * (img.at(x, y + 1) - img.at(x, y - 1));
            g.gx.at(x, y) = dx;
            g.gy.at(x, y) = dy;
            g.magnitude.at(x, y) = std::sqrt(dx * dx + dy * dy);
        }
    }
    return g;
}

/// 2x2 mean downsampling.
inline Grid<float> downsample_half(const Grid<float>& img) {
    Grid<float> out(img.width() / 2, img.height() / 2);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out.at(x, y) = 0.25f * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                                    img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1));
    return out;
}

/// Downsampling for depth/uncertainty: mean over valid (> 0) samples.
inline Grid<float> downsample_half_valid(const Grid<float>& img) {
    Grid<float> out(img.width() / 2, img.height() / 2);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            float sum = 0.f;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    float v = img.at(2 * x + dx, 2 * y + dy);
                    if (v > 0) {
                        sum += v;
                        ++n;
                    }
                }
            out.at(x, y) = n > 0 ? sum / n : 0.f;
        }
    return out;
}

inline Grid<float> resize_bilinear(const Grid<float>& img, int new_w, int new_h) {
    Grid<float> out(new_w, new_h);
    double sx = static_cast<double>(img.width()) / new_w;
    double sy = static_cast<double>(img.height()) / new_h;
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x) {
            double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
            out.at(x, y) = static_cast<float>(sample_bilinear(img, {src_x, src_y}));
        }
    return out;
}

template <typename T>
inline Grid<T> resize_nearest(const Grid<T>& img, int new_w, int new_h) {
    Grid<T> out(new_w, new_h);
    double sx = static_cast<double>(img.width()) / new_w;
    double sy = static_cast<double>(img.height()) / new_h;
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x) {
            int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, img.width() - 1);
            int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, img.height() - 1);
            out.at(x, y) = img.at(src_x, src_y);
        }
    return out;
}

inline double mean_valid(const Grid<float>& g) {
    double sum = 0;
    size_t n = 0;
    for (float v : g.values())
        if (v > 0) {
            sum += v;
            ++n;
        }
    return n > 0 ? sum / n : 0.0;
}

}  // namespace cnnslam
