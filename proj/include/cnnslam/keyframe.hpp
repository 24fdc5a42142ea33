#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"
#include "cnnslam/prediction.hpp"

namespace cnnslam {

struct KeyFrame {
    int id = 0;
    RigidPose pose;  // world-to-camera
    IntensityImage intensity;
    DepthMap depth;
    UncertaintyMap uncertainty;
    std::optional<SemanticLabelMap> labels;
    int generation = 0;
    double timestamp = 0;
};

using KeyFramePtr = std::shared_ptr<const KeyFrame>;

struct KeyframePolicy {
    double max_translation = 0.15;  // meters; pipeline scales by mean key-frame depth
    double max_rotation = 10.0 * M_PI / 180.0;
};

inline bool should_create_keyframe(const RigidPose& current, const KeyFrame& nearest,
                                   const KeyframePolicy& policy) {
    RigidPose rel = current.compose(nearest.pose.inverse());
    return rel.translation.norm() > policy.max_translation ||
           rel.rotation_angle() > policy.max_rotation;
}

/// Minimizes translation + 1 m/rad * rotation angle; ties go to the lower id.
inline KeyFramePtr find_nearest_keyframe(const RigidPose& current,
                                         const std::vector<KeyFramePtr>& keyframes) {
    KeyFramePtr best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& kf : keyframes) {
        double d = pose_distance(current, kf->pose);
        if (d < best_dist || (d == best_dist && best && kf->id < best->id)) {
            best_dist = d;
            best = kf;
        }
    }
    return best;
}

/// Inverse-variance weighted fusion of two depth estimates. Shared by
/// key-frame creation (neighbor propagation) and frame-wise refinement.
struct FusedEstimate {
    double depth;
    double uncertainty;
};

inline FusedEstimate fuse_depth(double d_prior, double u_prior, double d_obs, double u_obs) {
    double denom = u_prior + u_obs;
    return {(u_obs * d_prior + u_prior * d_obs) / denom, (u_obs * u_prior) / denom};
}

/// Uncertainty from prediction coherence: squared difference between the new
/// key-frame's depth and the neighbor's depth sampled at the warped location.
/// Out-of-view pixels and the very first key-frame get u_max.
inline UncertaintyMap init_uncertainty(const DepthMap& depth, const KeyFrame* nearest,
                                       const RigidPose& T_nearest_from_new,
                                       const CameraIntrinsics& K, double u_max) {
    UncertaintyMap u(depth.width(), depth.height(), static_cast<float>(u_max));
    if (!nearest) return u;
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            double d = depth.at(x, y);
            if (d <= 0) continue;
            auto w = warp({static_cast<double>(x), static_cast<double>(y)}, d,
                          T_nearest_from_new, K);
            if (!w || w->x > depth.width() - 1 || w->y > depth.height() - 1) continue;
            double neighbor_d = sample_bilinear(nearest->depth, *w);
            if (neighbor_d <= 0) continue;
            double diff = d - neighbor_d;
            u.at(x, y) = static_cast<float>(diff * diff);
        }
    return u;
}

/// Propagated uncertainty of a neighbor pixel v toward the new key-frame:
/// (D_kj(v) / D_ki(u))^p * U_kj(v) + sigma_p^2, with p = 1 as printed and
/// configurable through `exponent`.
inline double propagate_uncertainty(double neighbor_depth, double new_depth,
                                    double neighbor_uncertainty, double sigma_p_sq,
                                    double exponent = 1.0) {
    double ratio = neighbor_depth / new_depth;
    double factor = exponent == 1.0 ? ratio : std::pow(ratio, exponent);
    return factor * neighbor_uncertainty + sigma_p_sq;
}

struct KeyframeFusionParams {
    double sigma_p_sq = 0.01;        // m^2, white noise added on propagation
    double propagation_exponent = 1.0;
};

/// Fuses a freshly initialized key-frame (depth, uncertainty) with the refined
/// maps of its nearest neighbor. Pixels whose warp leaves the neighbor's view
/// keep their prior values.
inline void fuse_new_keyframe(DepthMap& depth, UncertaintyMap& uncertainty,
                              const KeyFrame& neighbor, const RigidPose& T_nearest_from_new,
                              const CameraIntrinsics& K, const KeyframeFusionParams& params) {
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            double d = depth.at(x, y);
            if (d <= 0) continue;
            auto w = warp({static_cast<double>(x), static_cast<double>(y)}, d,
                          T_nearest_from_new, K);
            if (!w || w->x > depth.width() - 1 || w->y > depth.height() - 1) continue;
            double nd = sample_bilinear(neighbor.depth, *w);
            if (nd <= 0) continue;
            double nu = sample_bilinear(neighbor.uncertainty, *w);
            double propagated =
                propagate_uncertainty(nd, d, nu, params.sigma_p_sq, params.propagation_exponent);
            double u_prior = uncertainty.at(x, y);
            if (u_prior + propagated <= 0) continue;
            FusedEstimate fused = fuse_depth(d, u_prior, nd, propagated);
            depth.at(x, y) = static_cast<float>(fused.depth);
            uncertainty.at(x, y) = static_cast<float>(fused.uncertainty);
        }
}

}  // namespace cnnslam
