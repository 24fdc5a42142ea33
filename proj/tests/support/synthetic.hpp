#pragma once

// Procedural plane scene used across the test suites: a textured slanted
// plane in world coordinates, rendered analytically for any camera pose.
// Depth per pixel has a closed form, which makes it an independent oracle
// for warping, stereo and tracking.

#include <cmath>
#include <filesystem>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "cnnslam/dataset.hpp"
#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"
#include "cnnslam/keyframe.hpp"

namespace synthetic {

using namespace cnnslam;

struct PlaneScene {
    Vec3 normal = Vec3(0.15, 0.1, 1.0).normalized();
    double dist = 2.0;            // plane: normal . X = dist
    double texture_scale = 1.0;   // spatial frequency multiplier

    double texture(const Vec3& x) const {
        double s = texture_scale;
        double v = 0.5 + 0.18 * std::sin(9.0 * s * x.x() + 2.0 * s * x.y()) +
                   0.14 * std::sin(7.0 * s * x.y() - 3.0 * s * x.x() + 0.7) +
                   0.10 * std::sin(5.0 * s * (x.x() + x.y()) + 11.0 * s * x.z());
        return std::clamp(v, 0.0, 1.0);
    }

    /// Depth of the plane along the ray of pixel u for a world-to-camera pose.
    double depth_at(const PixelCoord& u, const RigidPose& pose, const CameraIntrinsics& K) const {
        RigidPose cam_to_world = pose.inverse();
        Vec3 dir = cam_to_world.rotation * vertex(u, 1.0, K);
        double denom = normal.dot(dir);
        if (std::abs(denom) < 1e-12) return -1;
        double d = (dist - normal.dot(cam_to_world.translation)) / denom;
        return d;
    }

    double intensity_at(const PixelCoord& u, const RigidPose& pose,
                        const CameraIntrinsics& K) const {
        double d = depth_at(u, pose, K);
        if (d <= 0) return 0.5;
        Vec3 world = pose.inverse().apply(vertex(u, d, K));
        return texture(world);
    }

    void render(const RigidPose& pose, const CameraIntrinsics& K, IntensityImage* image,
                DepthMap* depth = nullptr) const {
        if (image) *image = IntensityImage(K.width, K.height);
        if (depth) *depth = DepthMap(K.width, K.height);
        for (int y = 0; y < K.height; ++y)
            for (int x = 0; x < K.width; ++x) {
                PixelCoord u{static_cast<double>(x), static_cast<double>(y)};
                double d = depth_at(u, pose, K);
                if (image) image->at(x, y) = static_cast<float>(intensity_at(u, pose, K));
                if (depth) depth->at(x, y) = static_cast<float>(d > 0 ? d : 0);
            }
    }

    KeyFrame make_keyframe(int id, const RigidPose& pose, const CameraIntrinsics& K,
                           double uncertainty = 1e-6) const {
        KeyFrame kf;
        kf.id = id;
        kf.pose = pose;
        render(pose, K, &kf.intensity, &kf.depth);
        kf.uncertainty = UncertaintyMap(K.width, K.height, static_cast<float>(uncertainty));
        return kf;
    }
};

inline CameraIntrinsics test_intrinsics(int w = 160, int h = 120) {
    return CameraIntrinsics(0.78 * w, 0.78 * w, w / 2.0 - 0.5, h / 2.0 - 0.5, w, h);
}

inline void save_intensity_png(const IntensityImage& img, const std::string& path) {
    cv::Mat m(img.height(), img.width(), CV_8UC1);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            m.at<uint8_t>(y, x) =
                static_cast<uint8_t>(std::clamp(img.at(x, y) * 255.f + 0.5f, 0.f, 255.f));
    cv::imwrite(path, m);
}

/// Writes a TUM-layout dataset (rgb/, depth/, associations, groundtruth,
/// camera config) for the given trajectory of world-to-camera poses.
inline void write_dataset(const std::string& root, const PlaneScene& scene,
                          const std::vector<RigidPose>& poses, const CameraIntrinsics& K) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "rgb");
    fs::create_directories(fs::path(root) / "depth");
    std::ofstream assoc(fs::path(root) / "associations.txt");
    std::ofstream depth_list(fs::path(root) / "depth.txt");
    std::vector<std::pair<double, RigidPose>> gt;
    char name[64];
    for (size_t i = 0; i < poses.size(); ++i) {
        double ts = 1000.0 + 0.1 * static_cast<double>(i);
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        IntensityImage img;
        DepthMap depth;
        scene.render(poses[i], K, &img, &depth);
        save_intensity_png(img, (fs::path(root) / "rgb" / name).string());
        save_depth_png(depth, (fs::path(root) / "depth" / name).string());
        char line[160];
        std::snprintf(line, sizeof(line), "%.6f rgb/%s %.6f depth/%s\n", ts, name, ts, name);
        assoc << line;
        std::snprintf(line, sizeof(line), "%.6f depth/%s\n", ts, name);
        depth_list << line;
        gt.emplace_back(ts, poses[i].inverse());
    }
    write_trajectory(gt, (fs::path(root) / "groundtruth.txt").string());
    std::ofstream cam(fs::path(root) / "camera.txt");
    cam << "fx = " << K.fx << "\nfy = " << K.fy << "\ncx = " << K.cx << "\ncy = " << K.cy
        << "\nwidth = " << K.width << "\nheight = " << K.height << "\n";
}

}  // namespace synthetic
