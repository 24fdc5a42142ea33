#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "cnnslam/errors.hpp"

namespace cnnslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Mat3 skew(const Vec3& w) {
    Mat3 m;
    m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return m;
}

/// Rigid body transform. Applies as p' = R p + t.
struct RigidPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidPose identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    RigidPose compose(const RigidPose& other) const {
        // this ∘ other: apply `other` first.
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    RigidPose inverse() const {
        Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }

    double rotation_angle() const {
        double c = (rotation.trace() - 1.0) * 0.5;
        return std::acos(std::clamp(c, -1.0, 1.0));
    }

    Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }

    static RigidPose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
        return {q.normalized().toRotationMatrix(), t};
    }
};

/// xi = (v, w): translational part first, rotational part last.
inline RigidPose se3_exp(const Vec6& xi) {
    Vec3 v = xi.head<3>();
    Vec3 w = xi.tail<3>();
    double theta = w.norm();
    Mat3 wx = skew(w);
    Mat3 R, V;
    if (theta < 1e-10) {
        R = Mat3::Identity() + wx;
        V = Mat3::Identity() + 0.5 * wx;
    } else {
        double a = std::sin(theta) / theta;
        double b = (1.0 - std::cos(theta)) / (theta * theta);
        double c = (1.0 - a) / (theta * theta);
        R = Mat3::Identity() + a * wx + b * wx * wx;
        V = Mat3::Identity() + b * wx + c * wx * wx;
    }
    return {R, V * v};
}

inline Vec6 se3_log(const RigidPose& T) {
    double theta = T.rotation_angle();
    Vec3 w;
    if (theta < 1e-10) {
        Vec3 axis(T.rotation(2, 1) - T.rotation(1, 2), T.rotation(0, 2) - T.rotation(2, 0),
                  T.rotation(1, 0) - T.rotation(0, 1));
        w = 0.5 * axis;
    } else {
        Eigen::AngleAxisd aa(T.rotation);
        w = aa.angle() * aa.axis();
    }
    Mat3 wx = skew(w);
    Mat3 Vinv;
    if (theta < 1e-10) {
        Vinv = Mat3::Identity() - 0.5 * wx;
    } else {
        double half = 0.5 * theta;
        double cot = half / std::tan(half);
        Vinv = Mat3::Identity() - 0.5 * wx + (1.0 - cot) / (theta * theta) * wx * wx;
    }
    Vec6 xi;
    xi.head<3>() = Vinv * T.translation;
    xi.tail<3>() = w;
    return xi;
}

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
        : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
        if (fx <= 0 || fy <= 0) throw NonPositiveFocal();
    }

    /// Intrinsics for the same camera at a different resolution.
    CameraIntrinsics scaled(int new_w, int new_h) const {
        double sx = static_cast<double>(new_w) / width;
        double sy = static_cast<double>(new_h) / height;
        return CameraIntrinsics(fx * sx, fy * sy, cx * sx, cy * sy, new_w, new_h);
    }

    Mat3 matrix() const {
        Mat3 k;
        k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
        return k;
    }
};

struct PixelCoord {
    double x = 0, y = 0;

    Vec3 homogeneous() const { return {x, y, 1.0}; }

    bool inside(const CameraIntrinsics& k, double margin = 0.0) const {
        return x >= margin && x < k.width - margin && y >= margin && y < k.height - margin;
    }
};

inline PixelCoord project(const Vec3& p, const CameraIntrinsics& k) {
    if (p.z() <= 0) throw NonPositiveDepth("projection requires z > 0");
    return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Vec3 vertex(const PixelCoord& u, double depth, const CameraIntrinsics& k) {
    if (depth <= 0) throw NonPositiveDepth("vertex requires depth > 0");
    return {(u.x - k.cx) / k.fx * depth, (u.y - k.cy) / k.fy * depth, depth};
}

/// Warps u through T; empty when the point leaves the image or ends behind the camera.
inline std::optional<PixelCoord> warp(const PixelCoord& u, double depth, const RigidPose& T,
                                      const CameraIntrinsics& k) {
    Vec3 p = T.apply(vertex(u, depth, k));
    if (p.z() <= 0) return std::nullopt;
    PixelCoord w = project(p, k);
    if (!w.inside(k)) return std::nullopt;
    return w;
}

/// Combined translation + rotation distance; lambda in meters per radian.
inline double pose_distance(const RigidPose& a, const RigidPose& b, double lambda = 1.0) {
    RigidPose rel = a.compose(b.inverse());
    return rel.translation.norm() + lambda * rel.rotation_angle();
}

}  // namespace cnnslam
