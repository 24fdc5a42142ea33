#pragma once

#include <cmath>
#include <optional>

#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"
#include "cnnslam/keyframe.hpp"

namespace cnnslam {

struct RefinementParams {
    double sigma_intensity = 0.03;
    double min_depth = 0.1;
    double max_depth = 10.0;
    double prior_sigma_factor = 2.0;   // search D +- factor * sqrt(U)
    double ambiguity_ratio = 0.9;      // best/second-best SSD gate
    int max_search_steps = 100;
    double min_gradient = 1e-4;        // floor on epipolar gradient
};

enum class MatchStatus {
    Ok,
    DegenerateBaseline,
    AmbiguousMatch,
    OutOfView,
};

struct EpipolarSearch {
    PixelCoord pixel;
    PixelCoord seg_start, seg_end;  // projections at d_min / d_max in frame t
    Vec2 direction;                 // unit, start -> end
    double length = 0;
    double d_min = 0, d_max = 0;
    double d_prior = 0;             // center of the search window
};

struct MatchResult {
    MatchStatus status = MatchStatus::OutOfView;
    double depth = 0;
    double match_error = 0;     // SSD at the best position
    PixelCoord position;        // subpixel match in frame t
    double uncertainty = 0;     // observation variance, m^2
};

struct ObservationMaps {
    DepthMap depth;          // 0 = no observation
    UncertaintyMap uncertainty;
};

struct ObservationStats {
    size_t matched = 0;
    size_t degenerate = 0;
    size_t ambiguous = 0;
    size_t out_of_view = 0;
};

namespace detail {

/// Projection of the key-frame pixel's ray point at depth d into frame t;
/// empty when behind the camera or outside the frame.
inline std::optional<PixelCoord> project_at_depth(const PixelCoord& u, double d,
                                                  const RigidPose& T, const CameraIntrinsics& K) {
    Vec3 p = T.apply(vertex(u, d, K));
    if (p.z() <= 1e-9) return std::nullopt;
    PixelCoord w = project(p, K);
    if (!w.inside(K)) return std::nullopt;
    return w;
}

}  // namespace detail

/// Epipolar segment in frame t for the depth interval [d_min, d_max].
/// Returns DegenerateBaseline (status in MatchResult terms) as std::nullopt.
inline std::optional<EpipolarSearch> epipolar_segment(const PixelCoord& u, const RigidPose& T,
                                                      const CameraIntrinsics& K, double d_min,
                                                      double d_max, double d_prior = 0) {
    if (d_min <= 0 || d_max <= 0 || d_max < d_min) return std::nullopt;
    // Shrink an endpoint toward the other when it projects out of view.
    auto locate = [&](double d_bad, double d_good) -> std::optional<std::pair<double, PixelCoord>> {
        double lo = d_bad, hi = d_good;
        std::optional<PixelCoord> best;
        double best_d = d_good;
        for (int i = 0; i < 12; ++i) {
            double mid = 0.5 * (lo + hi);
            auto p = detail::project_at_depth(u, mid, T, K);
            if (p) {
                best = p;
                best_d = mid;
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if (!best) return std::nullopt;
        return std::make_pair(best_d, *best);
    };

    auto p0 = detail::project_at_depth(u, d_min, T, K);
    auto p1 = detail::project_at_depth(u, d_max, T, K);
    double used_min = d_min, used_max = d_max;
    if (!p0 && p1) {
        auto fixed = locate(d_min, d_max);
        if (!fixed) return std::nullopt;
        used_min = fixed->first;
        p0 = fixed->second;
    } else if (p0 && !p1) {
        auto fixed = locate(d_max, d_min);
        if (!fixed) return std::nullopt;
        used_max = fixed->first;
        p1 = fixed->second;
    }
    if (!p0 || !p1) return std::nullopt;

    EpipolarSearch s;
    s.pixel = u;
    s.seg_start = *p0;
    s.seg_end = *p1;
    Vec2 delta(p1->x - p0->x, p1->y - p0->y);
    s.length = delta.norm();
    if (s.length < 1.0) return std::nullopt;
    s.direction = delta / s.length;
    s.d_min = used_min;
    s.d_max = used_max;
    s.d_prior = d_prior > 0 ? std::clamp(d_prior, used_min, used_max)
                            : 0.5 * (used_min + used_max);
    return s;
}

/// Depth along the key-frame ray of pixel u from a matched position in frame t.
inline std::optional<double> triangulate_depth(const PixelCoord& u, const PixelCoord& match,
                                               const RigidPose& T, const CameraIntrinsics& K) {
    Vec3 ray = T.rotation * vertex(u, 1.0, K);  // direction scaled by depth
    const Vec3& t = T.translation;
    double nx = (match.x - K.cx) / K.fx;
    double ny = (match.y - K.cy) / K.fy;
    double denom_x = ray.x() - nx * ray.z();
    double denom_y = ray.y() - ny * ray.z();
    double d;
    if (std::abs(denom_x) >= std::abs(denom_y)) {
        if (std::abs(denom_x) < 1e-12) return std::nullopt;
        d = (nx * t.z() - t.x()) / denom_x;
    } else {
        if (std::abs(denom_y) < 1e-12) return std::nullopt;
        d = (ny * t.z() - t.y()) / denom_y;
    }
    if (!(d > 0) || !std::isfinite(d)) return std::nullopt;
    return d;
}

/// 5-sample SSD matching along the epipolar segment at 1 px steps with
/// parabolic subpixel refinement, then triangulation and the gradient-based
/// observation variance U_t = (dd/dpos)^2 * sigma_I^2 / g^2.
inline MatchResult match_along_epipolar(const PixelCoord& u, const KeyFrame& kf,
                                        const IntensityImage& frame, const EpipolarSearch& search,
                                        const RigidPose& T, const CameraIntrinsics& K,
                                        const RefinementParams& params = {}) {
    MatchResult res;
    const Vec2& dir = search.direction;

    // Reference profile from the key-frame along the epipolar direction.
    double ref[5];
    for (int k = -2; k <= 2; ++k) {
        PixelCoord p{u.x + k * dir.x(), u.y + k * dir.y()};
        if (p.x < 0 || p.y < 0 || p.x > kf.intensity.width() - 1 ||
            p.y > kf.intensity.height() - 1) {
            res.status = MatchStatus::OutOfView;
            return res;
        }
        ref[k + 2] = sample_bilinear(kf.intensity, p);
    }

    int steps = static_cast<int>(std::floor(search.length)) + 1;
    int first = 0;
    if (steps > params.max_search_steps) {
        // Keep a window centered on the projection of the prior depth.
        auto pc = detail::project_at_depth(u, search.d_prior, T, K);
        double center = 0;
        if (pc) {
            Vec2 off(pc->x - search.seg_start.x, pc->y - search.seg_start.y);
            center = off.dot(dir);
        }
        first = std::clamp(static_cast<int>(center) - params.max_search_steps / 2, 0,
                           steps - params.max_search_steps);
        steps = params.max_search_steps;
    }

    std::vector<double> ssd(steps, std::numeric_limits<double>::infinity());
    for (int i = 0; i < steps; ++i) {
        double pos = first + i;
        bool ok = true;
        double acc = 0;
        for (int k = -2; k <= 2 && ok; ++k) {
            PixelCoord p{search.seg_start.x + (pos + k) * dir.x(),
                         search.seg_start.y + (pos + k) * dir.y()};
            if (p.x < 0 || p.y < 0 || p.x > frame.width() - 1 || p.y > frame.height() - 1) {
                ok = false;
                break;
            }
            double diff = sample_bilinear(frame, p) - ref[k + 2];
            acc += diff * diff;
        }
        if (ok) ssd[i] = acc;
    }

    int best = -1;
    double best_ssd = std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i)
        if (ssd[i] < best_ssd) {
            best_ssd = ssd[i];
            best = i;
        }
    if (best < 0 || !std::isfinite(best_ssd)) {
        res.status = MatchStatus::OutOfView;
        return res;
    }

    double second = std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i)
        if (std::abs(i - best) >= 2 && ssd[i] < second) second = ssd[i];
    if (std::isfinite(second)) {
        // Absolute margin first: a flat profile yields near-identical SSDs.
        if (second - best_ssd < 1e-8) {
            res.status = MatchStatus::AmbiguousMatch;
            return res;
        }
        if (second > 0 && best_ssd / second > params.ambiguity_ratio) {
            res.status = MatchStatus::AmbiguousMatch;
            return res;
        }
    } else if (steps < 2) {
        res.status = MatchStatus::DegenerateBaseline;
        return res;
    }

    // Parabolic subpixel refinement.
    double offset = 0;
    if (best > 0 && best < steps - 1 && std::isfinite(ssd[best - 1]) &&
        std::isfinite(ssd[best + 1])) {
        double denom = ssd[best - 1] - 2 * ssd[best] + ssd[best + 1];
        if (denom > 1e-12) offset = std::clamp(0.5 * (ssd[best - 1] - ssd[best + 1]) / denom, -0.5, 0.5);
    }
    double pos = first + best + offset;
    res.position = {search.seg_start.x + pos * dir.x(), search.seg_start.y + pos * dir.y()};
    res.match_error = best_ssd;

    auto depth = triangulate_depth(u, res.position, T, K);
    if (!depth || *depth < params.min_depth || *depth > params.max_depth) {
        res.status = MatchStatus::OutOfView;
        return res;
    }
    res.depth = *depth;

    // Depth sensitivity to match position, by finite differences.
    double h = 0.5;
    auto d_lo = triangulate_depth(
        u, {search.seg_start.x + (pos - h) * dir.x(), search.seg_start.y + (pos - h) * dir.y()}, T, K);
    auto d_hi = triangulate_depth(
        u, {search.seg_start.x + (pos + h) * dir.x(), search.seg_start.y + (pos + h) * dir.y()}, T, K);
    if (!d_lo || !d_hi) {
        res.status = MatchStatus::OutOfView;
        return res;
    }
    double slope = (*d_hi - *d_lo) / (2 * h);

    Vec2 grad = sample_bilinear_gradient(frame, res.position);
    double g = std::max(std::abs(grad.dot(dir)), params.min_gradient);
    res.uncertainty = slope * slope * params.sigma_intensity * params.sigma_intensity / (g * g);
    res.status = MatchStatus::Ok;
    return res;
}

/// Observation variance for an accepted match (exposed separately for tests;
/// match_along_epipolar already fills it in).
inline double observation_uncertainty(double depth_slope, double epipolar_gradient,
                                      const RefinementParams& params = {}) {
    double g = std::max(std::abs(epipolar_gradient), params.min_gradient);
    return depth_slope * depth_slope * params.sigma_intensity * params.sigma_intensity / (g * g);
}

/// Small-baseline stereo observations for every key-frame pixel against
/// frame t, parameterized directly at key-frame pixels.
inline ObservationMaps compute_observations(const KeyFrame& kf, const IntensityImage& frame,
                                            const RigidPose& T, const CameraIntrinsics& K,
                                            const RefinementParams& params = {},
                                            ObservationStats* stats = nullptr) {
    ObservationMaps obs;
    obs.depth = DepthMap(kf.depth.width(), kf.depth.height(), 0.f);
    obs.uncertainty = UncertaintyMap(kf.depth.width(), kf.depth.height(), 0.f);
    ObservationStats local;
    for (int y = 0; y < kf.depth.height(); ++y)
        for (int x = 0; x < kf.depth.width(); ++x) {
            double d = kf.depth.at(x, y);
            if (d <= 0) continue;
            double sigma_d = std::sqrt(std::max(0.f, kf.uncertainty.at(x, y)));
            double d_min = std::max(params.min_depth, d - params.prior_sigma_factor * sigma_d);
            double d_max = std::min(params.max_depth, d + params.prior_sigma_factor * sigma_d);
            PixelCoord u{static_cast<double>(x), static_cast<double>(y)};
            auto search = epipolar_segment(u, T, K, d_min, d_max, d);
            if (!search) {
                ++local.degenerate;
                continue;
            }
            MatchResult m = match_along_epipolar(u, kf, frame, *search, T, K, params);
            switch (m.status) {
                case MatchStatus::Ok:
                    obs.depth.at(x, y) = static_cast<float>(m.depth);
                    obs.uncertainty.at(x, y) = static_cast<float>(std::max(m.uncertainty, 1e-12));
                    ++local.matched;
                    break;
                case MatchStatus::AmbiguousMatch:
                    ++local.ambiguous;
                    break;
                case MatchStatus::DegenerateBaseline:
                    ++local.degenerate;
                    break;
                case MatchStatus::OutOfView:
                    ++local.out_of_view;
                    break;
            }
        }
    if (stats) *stats = local;
    return obs;
}

/// Fuses observations into the key-frame (same weighted scheme as key-frame
/// creation); unobserved pixels keep their prior values. Returns a new
/// generation.
inline KeyFrame refine_keyframe(const KeyFrame& kf, const ObservationMaps& obs) {
    KeyFrame out = kf;
    out.generation = kf.generation + 1;
    for (int y = 0; y < kf.depth.height(); ++y)
        for (int x = 0; x < kf.depth.width(); ++x) {
            double d_obs = obs.depth.at(x, y);
            if (d_obs <= 0) continue;
            double u_obs = obs.uncertainty.at(x, y);
            double d = kf.depth.at(x, y);
            double u = kf.uncertainty.at(x, y);
            if (d <= 0 || u + u_obs <= 0) continue;
            FusedEstimate fused = fuse_depth(d, u, d_obs, u_obs);
            out.depth.at(x, y) = static_cast<float>(fused.depth);
            out.uncertainty.at(x, y) = static_cast<float>(fused.uncertainty);
        }
    return out;
}

}  // namespace cnnslam
