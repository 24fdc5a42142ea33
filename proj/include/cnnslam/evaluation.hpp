#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cnnslam/errors.hpp"
#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"

namespace cnnslam {

struct TrajectoryPair {
    std::vector<Vec3> estimated;     // camera positions, associated one-to-one
    std::vector<Vec3> ground_truth;
};

/// One-to-one nearest-timestamp association within tolerance. Poses are
/// camera-to-world (TUM convention); only positions are kept.
inline TrajectoryPair associate_trajectories(
    const std::vector<std::pair<double, RigidPose>>& estimated,
    const std::vector<std::pair<double, RigidPose>>& ground_truth,
    double tolerance = 0.02) {
    TrajectoryPair pair;
    size_t j = 0;
    std::vector<bool> taken(ground_truth.size(), false);
    for (const auto& [ts, pose] : estimated) {
        while (j + 1 < ground_truth.size() && ground_truth[j + 1].first <= ts) ++j;
        size_t best = ground_truth.size();
        double best_dt = tolerance;
        for (size_t k = (j > 0 ? j - 1 : 0); k < std::min(j + 2, ground_truth.size()); ++k) {
            double dt = std::abs(ground_truth[k].first - ts);
            if (dt <= best_dt && !taken[k]) {
                best_dt = dt;
                best = k;
            }
        }
        if (best < ground_truth.size()) {
            taken[best] = true;
            pair.estimated.push_back(pose.translation);
            pair.ground_truth.push_back(ground_truth[best].second.translation);
        }
    }
    return pair;
}

enum class Alignment { None, Rigid };

/// RMSE of translational residuals after rigid (rotation + translation, no
/// scale) least-squares alignment of the estimate onto the ground truth.
/// Scale is deliberately not aligned: absolute scale is under test.
inline double absolute_trajectory_error(const TrajectoryPair& pair,
                                        Alignment align = Alignment::Rigid) {
    const size_t n = pair.estimated.size();
    if (n < 2 || pair.ground_truth.size() != n) throw InsufficientPairs();

    std::vector<Vec3> est = pair.estimated;
    if (align == Alignment::Rigid) {
        Vec3 mean_e = Vec3::Zero(), mean_g = Vec3::Zero();
        for (size_t i = 0; i < n; ++i) {
            mean_e += pair.estimated[i];
            mean_g += pair.ground_truth[i];
        }
        mean_e /= static_cast<double>(n);
        mean_g /= static_cast<double>(n);
        Mat3 W = Mat3::Zero();
        for (size_t i = 0; i < n; ++i)
            W += (pair.ground_truth[i] - mean_g) * (pair.estimated[i] - mean_e).transpose();
        Eigen::JacobiSVD<Mat3> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 S = Mat3::Identity();
        if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1;
        Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
        Vec3 t = mean_g - R * mean_e;
        for (auto& p : est) p = R * p + t;
    }

    double sum_sq = 0;
    for (size_t i = 0; i < n; ++i) sum_sq += (est[i] - pair.ground_truth[i]).squaredNorm();
    return std::sqrt(sum_sq / static_cast<double>(n));
}

struct DepthAccuracyReport {
    double percent_correct = 0;       // over all gt-valid pixels, missing = incorrect
    size_t evaluated_pixels = 0;      // gt-valid pixels
    size_t correct_pixels = 0;
    size_t estimated_pixels = 0;      // pixels that had an estimate
    double density = 0;               // estimated / evaluated
};

/// Percentage of pixels whose estimate is within 10% of ground truth. Pixels
/// without an estimate count as incorrect, which makes the metric
/// density-aware.
inline DepthAccuracyReport percent_correct_depth(const std::vector<DepthMap>& est,
                                                 const std::vector<DepthMap>& gt,
                                                 double threshold = 0.10) {
    if (gt.empty() || est.size() != gt.size()) throw NoGroundTruth();
    DepthAccuracyReport rep;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!gt[i].same_size(est[i])) throw NoGroundTruth("depth map size mismatch");
        for (int y = 0; y < gt[i].height(); ++y)
            for (int x = 0; x < gt[i].width(); ++x) {
                double g = gt[i].at(x, y);
                if (g <= 0) continue;
                ++rep.evaluated_pixels;
                double e = est[i].at(x, y);
                if (e <= 0) continue;
                ++rep.estimated_pixels;
                if (std::abs(e - g) < threshold * g) ++rep.correct_pixels;
            }
    }
    if (rep.evaluated_pixels == 0) throw NoGroundTruth("no valid ground-truth pixels");
    rep.percent_correct = 100.0 * rep.correct_pixels / rep.evaluated_pixels;
    rep.density = static_cast<double>(rep.estimated_pixels) / rep.evaluated_pixels;
    return rep;
}

struct MetricsReport {
    std::optional<double> ate;
    std::optional<DepthAccuracyReport> depth;
    size_t keyframe_count = 0;
    size_t frame_count = 0;
    double mean_track_ms = 0;
};

/// Byte-stable plain-text metrics file; unavailable metrics are marked, not
/// omitted silently.
inline void write_metrics_report(const MetricsReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    char buf[128];
    if (rep.ate) {
        std::snprintf(buf, sizeof(buf), "ate_rmse_m = %.6f\n", *rep.ate);
        out << buf;
    } else {
        out << "ate_rmse_m = unavailable\n";
    }
    if (rep.depth) {
        std::snprintf(buf, sizeof(buf), "percent_correct_depth = %.6f\n", rep.depth->percent_correct);
        out << buf;
        std::snprintf(buf, sizeof(buf), "depth_density = %.6f\n", rep.depth->density);
        out << buf;
        out << "depth_evaluated_pixels = " << rep.depth->evaluated_pixels << "\n";
    } else {
        out << "percent_correct_depth = unavailable\n";
    }
    out << "keyframe_count = " << rep.keyframe_count << "\n";
    out << "frame_count = " << rep.frame_count << "\n";
    std::snprintf(buf, sizeof(buf), "mean_track_ms = %.3f\n", rep.mean_track_ms);
    out << buf;
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace cnnslam
