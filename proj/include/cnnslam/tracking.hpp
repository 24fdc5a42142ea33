#pragma once

#include <cmath>
#include <vector>

#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"
#include "cnnslam/keyframe.hpp"

namespace cnnslam {

struct TrackingParams {
    double huber_delta = 3.0;          // in sigma-normalized residual units
    double sigma_intensity = 0.03;     // photometric noise std dev, [0,1] scale
    double gradient_threshold = 0.02;  // intensity / pixel
    int pyramid_levels = 3;
    int max_iterations = 20;
    double convergence_delta = 1e-6;
    double min_valid_ratio = 0.2;
};

struct TrackingResult {
    RigidPose relative_pose;  // key-frame -> frame
    RigidPose world_pose;     // world -> frame
    double final_energy = 0;
    double valid_pixel_ratio = 0;
    bool converged = false;
    std::vector<int> iterations_per_level;
};

struct PixelIndex {
    int x, y;
};

/// Pixels with gradient magnitude strictly above threshold, excluding a
/// 2-pixel border.
inline std::vector<PixelIndex> select_high_gradient_pixels(const GradientMap& grad,
                                                           double threshold) {
    std::vector<PixelIndex> out;
    const auto& mag = grad.magnitude;
    for (int y = 2; y < mag.height() - 2; ++y)
        for (int x = 2; x < mag.width() - 2; ++x)
            if (mag.at(x, y) > threshold) out.push_back({x, y});
    return out;
}

/// r(u, T) = I_kf(u) - I_t(warp(u)); empty when the warp leaves the frame.
inline std::optional<double> photometric_residual(const PixelCoord& u, const RigidPose& T,
                                                  const KeyFrame& kf, const IntensityImage& frame,
                                                  const CameraIntrinsics& K) {
    double d = sample_bilinear(kf.depth, u);
    if (d <= 0) return std::nullopt;
    auto w = warp(u, d, T, K);
    if (!w || w->x > frame.width() - 1 || w->y > frame.height() - 1) return std::nullopt;
    return sample_bilinear(kf.intensity, u) - sample_bilinear(frame, *w);
}

/// sigma^2 = 2 sigma_I^2 + (dr/dD)^2 * U(u), with dr/dD by finite
/// differencing the warp along the depth direction.
inline double residual_uncertainty(const PixelCoord& u, const RigidPose& T, const KeyFrame& kf,
                                   const IntensityImage& frame, const CameraIntrinsics& K,
                                   double sigma_intensity) {
    double base = 2.0 * sigma_intensity * sigma_intensity;
    double d = sample_bilinear(kf.depth, u);
    double uncertainty = sample_bilinear(kf.uncertainty, u);
    if (d <= 0 || uncertainty <= 0) return std::sqrt(base);
    double h = 0.01 * d;
    auto sample_at = [&](double depth) -> std::optional<double> {
        auto w = warp(u, depth, T, K);
        if (!w || w->x > frame.width() - 1 || w->y > frame.height() - 1) return std::nullopt;
        return sample_bilinear(frame, *w);
    };
    auto lo = sample_at(d - h), hi = sample_at(d + h);
    double dr_dd = 0;
    if (lo && hi) dr_dd = -(*hi - *lo) / (2 * h);
    return std::sqrt(base + dr_dd * dr_dd * uncertainty);
}

/// Jacobian of the photometric residual w.r.t. a left-multiplicative se(3)
/// increment on T. Empty when the warp is invalid.
inline std::optional<Vec6> residual_jacobian(const PixelCoord& u, const RigidPose& T,
                                             const KeyFrame& kf, const IntensityImage& frame,
                                             const CameraIntrinsics& K) {
    double d = sample_bilinear(kf.depth, u);
    if (d <= 0) return std::nullopt;
    Vec3 q = T.apply(vertex(u, d, K));
    if (q.z() <= 0) return std::nullopt;
    PixelCoord w = project(q, K);
    if (!w.inside(K) || w.x > frame.width() - 1 || w.y > frame.height() - 1) return std::nullopt;
    Vec2 grad = sample_bilinear_gradient(frame, w);
    double z = q.z(), z2 = z * z;
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << K.fx / z, 0, -K.fx * q.x() / z2, 0, K.fy / z, -K.fy * q.y() / z2;
    Eigen::Matrix<double, 3, 6> dq;
    dq.leftCols<3>() = Mat3::Identity();
    dq.rightCols<3>() = -skew(q);
    // r = I_kf - I_t(w): the chain picks up a minus sign.
    return (-(grad.transpose() * dproj * dq)).transpose();
}

namespace detail {

struct PyramidLevel {
    IntensityImage kf_intensity;
    DepthMap kf_depth;
    UncertaintyMap kf_uncertainty;
    IntensityImage frame;
    CameraIntrinsics K;
    std::vector<PixelIndex> pixels;
};

inline double huber_loss(double s, double delta) {
    double a = std::abs(s);
    return a <= delta ? 0.5 * s * s : delta * (a - 0.5 * delta);
}

inline double huber_weight(double s, double delta) {
    double a = std::abs(s);
    return a <= delta ? 1.0 : delta / a;
}

struct EnergyEval {
    double mean_energy = 0;
    double valid_ratio = 0;
    size_t valid = 0;
};

inline EnergyEval evaluate_energy(const PyramidLevel& lvl, const RigidPose& T, const KeyFrame& kf_view,
                                  const TrackingParams& params) {
    EnergyEval ev;
    double sum = 0;
    for (const auto& px : lvl.pixels) {
        PixelCoord u{static_cast<double>(px.x), static_cast<double>(px.y)};
        auto r = photometric_residual(u, T, kf_view, lvl.frame, lvl.K);
        if (!r) continue;
        double sigma =
            residual_uncertainty(u, T, kf_view, lvl.frame, lvl.K, params.sigma_intensity);
        sum += huber_loss(*r / sigma, params.huber_delta);
        ++ev.valid;
    }
    ev.valid_ratio = lvl.pixels.empty() ? 0.0 : static_cast<double>(ev.valid) / lvl.pixels.size();
    ev.mean_energy = ev.valid > 0 ? sum / ev.valid : std::numeric_limits<double>::infinity();
    return ev;
}

}  // namespace detail

/// Coarse-to-fine weighted Gauss-Newton photometric alignment of the current
/// frame against the key-frame. Throws TrackingLost when too few pixels stay
/// valid or the image carries no usable gradient.
inline TrackingResult estimate_pose(const KeyFrame& kf, const IntensityImage& frame,
                                    const CameraIntrinsics& K, const RigidPose& T_init,
                                    const TrackingParams& params = {}) {
    // Build pyramids.
    std::vector<detail::PyramidLevel> levels;
    {
        detail::PyramidLevel base;
        base.kf_intensity = kf.intensity;
        base.kf_depth = kf.depth;
        base.kf_uncertainty = kf.uncertainty;
        base.frame = frame;
        base.K = K;
        levels.push_back(std::move(base));
        for (int l = 1; l < params.pyramid_levels; ++l) {
            const auto& prev = levels.back();
            if (prev.kf_intensity.width() < 16 || prev.kf_intensity.height() < 16) break;
            detail::PyramidLevel next;
            next.kf_intensity = downsample_half(prev.kf_intensity);
            next.kf_depth = downsample_half_valid(prev.kf_depth);
            next.kf_uncertainty = downsample_half_valid(prev.kf_uncertainty);
            next.frame = downsample_half(prev.frame);
            next.K = prev.K.scaled(next.frame.width(), next.frame.height());
            levels.push_back(std::move(next));
        }
    }
    for (auto& lvl : levels) {
        GradientMap g = compute_gradients(lvl.kf_intensity);
        lvl.pixels = select_high_gradient_pixels(g, params.gradient_threshold);
    }
    if (levels.front().pixels.empty()) throw TrackingLost("no high-gradient pixels");

    TrackingResult result;
    result.iterations_per_level.assign(levels.size(), 0);
    RigidPose T = T_init;

    for (int l = static_cast<int>(levels.size()) - 1; l >= 0; --l) {
        const auto& lvl = levels[l];
        if (lvl.pixels.empty()) continue;
        KeyFrame view;  // lightweight per-level view of the key-frame buffers
        view.intensity = lvl.kf_intensity;
        view.depth = lvl.kf_depth;
        view.uncertainty = lvl.kf_uncertainty;

        auto current = detail::evaluate_energy(lvl, T, view, params);
        for (int iter = 0; iter < params.max_iterations; ++iter) {
            Mat6 H = Mat6::Zero();
            Vec6 g = Vec6::Zero();
            size_t used = 0;
            for (const auto& px : lvl.pixels) {
                PixelCoord u{static_cast<double>(px.x), static_cast<double>(px.y)};
                auto r = photometric_residual(u, T, view, lvl.frame, lvl.K);
                if (!r) continue;
                auto J = residual_jacobian(u, T, view, lvl.frame, lvl.K);
                if (!J) continue;
                double sigma =
                    residual_uncertainty(u, T, view, lvl.frame, lvl.K, params.sigma_intensity);
                double w = detail::huber_weight(*r / sigma, params.huber_delta) / (sigma * sigma);
                H += w * (*J) * J->transpose();
                g += w * (*J) * (*r);
                ++used;
            }
            if (used < 6) break;
            Vec6 delta = H.ldlt().solve(-g);
            if (!delta.allFinite()) break;

            // Step halving keeps the energy non-increasing.
            double step = 1.0;
            bool accepted = false;
            for (int half = 0; half < 8; ++half) {
                RigidPose T_new = se3_exp(step * delta).compose(T);
                auto trial = detail::evaluate_energy(lvl, T_new, view, params);
                if (trial.mean_energy <= current.mean_energy + 1e-15) {
                    T = T_new;
                    current = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            ++result.iterations_per_level[l];
            if (!accepted) break;
            if ((step * delta).norm() < params.convergence_delta) {
                result.converged = true;
                break;
            }
        }
        if (l == 0) {
            result.final_energy = current.mean_energy;
            result.valid_pixel_ratio = current.valid_ratio;
        }
    }

    if (result.valid_pixel_ratio < params.min_valid_ratio)
        throw TrackingLost("valid pixel ratio " + std::to_string(result.valid_pixel_ratio));
    if (!std::isfinite(result.final_energy)) throw TrackingLost("diverged energy");

    result.relative_pose = T;
    result.world_pose = T.compose(kf.pose);
    return result;
}

}  // namespace cnnslam
