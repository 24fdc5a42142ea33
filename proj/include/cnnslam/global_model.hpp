#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>
#include <vector>

#include "cnnslam/errors.hpp"
#include "cnnslam/geometry.hpp"
#include "cnnslam/keyframe.hpp"

namespace cnnslam {

struct ModelElement {
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    Vec3 color = Vec3::Zero();  // [0,1] rgb
    double radius = 0;
    double confidence_weight = 0;
    std::vector<double> label_histogram;
};

/// Argmax label; ties go to the lowest class id.
inline int element_label(const ModelElement& e) {
    if (e.confidence_weight <= 0) throw UnlabeledElement();
    int best = -1;
    double best_v = 0;
    for (size_t c = 0; c < e.label_histogram.size(); ++c)
        if (e.label_histogram[c] > best_v) {
            best_v = e.label_histogram[c];
            best = static_cast<int>(c);
        }
    if (best < 0) throw UnlabeledElement();
    return best;
}

struct ModelParams {
    double normal_agreement_deg = 30.0;
    double association_radius_factor = 0.5;  // fraction of the element radius
    int integration_stride = 1;              // integrate every n-th pixel
};

/// Fixed palette for the 4 indoor super-classes, extended procedurally.
inline std::array<uint8_t, 3> label_color(int label) {
    static const std::array<std::array<uint8_t, 3>, 4> base = {{
        {0, 128, 255},   // floor
        {0, 200, 0},     // vertical structure
        {255, 160, 0},   // large structure / furniture
        {255, 0, 128},   // small structure
    }};
    if (label >= 0 && label < 4) return base[label];
    uint32_t h = static_cast<uint32_t>(label) * 2654435761u;
    return {static_cast<uint8_t>(64 + (h & 0x7f)), static_cast<uint8_t>(64 + ((h >> 8) & 0x7f)),
            static_cast<uint8_t>(64 + ((h >> 16) & 0x7f))};
}

class GlobalModel {
public:
    explicit GlobalModel(ModelParams params = {}) : params_(params) {}

    const std::vector<ModelElement>& elements() const { return elements_; }
    bool has_labels() const { return label_classes_ > 0; }
    int label_classes() const { return label_classes_; }

    /// Backprojects every valid key-frame pixel, associating to an existing
    /// element (within the element's radius, normals within 30 degrees) or
    /// inserting a new one. Associated elements update by confidence-weighted
    /// running average and count the pixel's label into their histogram.
    void integrate_keyframe(const KeyFrame& kf, const CameraIntrinsics& K) {
        RigidPose cam_to_world = kf.pose.inverse();
        double cos_thresh = std::cos(params_.normal_agreement_deg * M_PI / 180.0);
        if (kf.labels) label_classes_ = std::max(label_classes_, kf.labels->class_count);

        const int stride = std::max(1, params_.integration_stride);
        for (int y = 1; y < kf.depth.height() - 1; y += stride)
            for (int x = 1; x < kf.depth.width() - 1; x += stride) {
                double d = kf.depth.at(x, y);
                if (d <= 0) continue;
                PixelCoord u{static_cast<double>(x), static_cast<double>(y)};
                Vec3 p_cam = vertex(u, d, K);
                Vec3 p_world = cam_to_world.apply(p_cam);

                Vec3 n_cam = pixel_normal(kf, K, x, y);
                Vec3 n_world = cam_to_world.rotation * n_cam;
                double radius = d / K.fx;
                double gray = kf.intensity.at(x, y);
                int label = kf.labels ? kf.labels->labels.at(x, y) : -1;

                ModelElement* match = find_match(p_world, n_world, cos_thresh);
                if (match) {
                    double w = match->confidence_weight;
                    match->position = (w * match->position + p_world) / (w + 1);
                    Vec3 n_avg = w * match->normal + n_world;
                    if (n_avg.norm() > 1e-9) match->normal = n_avg.normalized();
                    match->color = (w * match->color + Vec3(gray, gray, gray)) / (w + 1);
                    match->radius = (w * match->radius + radius) / (w + 1);
                    match->confidence_weight = w + 1;
                    add_label(*match, label);
                } else {
                    ModelElement e;
                    e.position = p_world;
                    e.normal = n_world;
                    e.color = Vec3(gray, gray, gray);
                    e.radius = radius;
                    e.confidence_weight = 1;
                    add_label(e, label);
                    size_t idx = elements_.size();
                    elements_.push_back(std::move(e));
                    grid_[cell_of(p_world)].push_back(idx);
                }
            }
    }

    /// ASCII PLY with positions, normals and per-vertex color.
    void export_ply(const std::string& path, const std::string& color_mode) const {
        if (elements_.empty()) throw IoError("empty model, nothing to export");
        bool by_label = color_mode == "label";
        if (by_label && !has_labels())
            throw UnlabeledElement("label export requested but no semantic maps were provided");
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path);
        out << "ply\nformat ascii 1.0\nelement vertex " << elements_.size()
            << "\nproperty float x\nproperty float y\nproperty float z\n"
               "property float nx\nproperty float ny\nproperty float nz\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        for (const auto& e : elements_) {
            std::array<uint8_t, 3> rgb;
            if (by_label) {
                rgb = label_color(element_label(e));
            } else {
                for (int c = 0; c < 3; ++c)
                    rgb[c] = static_cast<uint8_t>(std::clamp(e.color[c] * 255.0, 0.0, 255.0));
            }
            out << static_cast<float>(e.position.x()) << " " << static_cast<float>(e.position.y())
                << " " << static_cast<float>(e.position.z()) << " "
                << static_cast<float>(e.normal.x()) << " " << static_cast<float>(e.normal.y())
                << " " << static_cast<float>(e.normal.z()) << " " << int(rgb[0]) << " "
                << int(rgb[1]) << " " << int(rgb[2]) << "\n";
        }
        if (!out) throw IoError("write failed for " + path);
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path);
        uint64_t n = elements_.size();
        int32_t classes = label_classes_;
        out.write(reinterpret_cast<const char*>(&n), 8);
        out.write(reinterpret_cast<const char*>(&classes), 4);
        for (const auto& e : elements_) {
            double buf[11] = {e.position.x(), e.position.y(), e.position.z(), e.normal.x(),
                              e.normal.y(),  e.normal.z(),   e.color.x(),    e.color.y(),
                              e.color.z(),   e.radius,       e.confidence_weight};
            out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
            uint32_t hn = static_cast<uint32_t>(e.label_histogram.size());
            out.write(reinterpret_cast<const char*>(&hn), 4);
            out.write(reinterpret_cast<const char*>(e.label_histogram.data()), hn * 8);
        }
        if (!out) throw IoError("write failed for " + path);
    }

    static GlobalModel load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw MissingFile(path);
        GlobalModel model;
        uint64_t n = 0;
        int32_t classes = 0;
        in.read(reinterpret_cast<char*>(&n), 8);
        in.read(reinterpret_cast<char*>(&classes), 4);
        model.label_classes_ = classes;
        for (uint64_t i = 0; i < n; ++i) {
            double buf[11];
            in.read(reinterpret_cast<char*>(buf), sizeof(buf));
            ModelElement e;
            e.position = {buf[0], buf[1], buf[2]};
            e.normal = {buf[3], buf[4], buf[5]};
            e.color = {buf[6], buf[7], buf[8]};
            e.radius = buf[9];
            e.confidence_weight = buf[10];
            uint32_t hn = 0;
            in.read(reinterpret_cast<char*>(&hn), 4);
            e.label_histogram.resize(hn);
            in.read(reinterpret_cast<char*>(e.label_histogram.data()), hn * 8);
            if (!in) throw UnsupportedFormat("truncated model file: " + path);
            size_t idx = model.elements_.size();
            model.grid_[model.cell_of(e.position)].push_back(idx);
            model.elements_.push_back(std::move(e));
        }
        return model;
    }

private:
    static Vec3 pixel_normal(const KeyFrame& kf, const CameraIntrinsics& K, int x, int y) {
        auto v = [&](int px, int py) {
            double d = kf.depth.at(px, py);
            if (d <= 0) d = kf.depth.at(x, y);
            return vertex({static_cast<double>(px), static_cast<double>(py)}, d, K);
        };
        Vec3 dx = v(x + 1, y) - v(x - 1, y);
        Vec3 dy = v(x, y + 1) - v(x, y - 1);
        Vec3 n = dx.cross(dy);
        if (n.norm() < 1e-12) return -Vec3::UnitZ();
        n.normalize();
        // orient toward the camera
        Vec3 view = vertex({static_cast<double>(x), static_cast<double>(y)}, kf.depth.at(x, y), K);
        if (n.dot(view) > 0) n = -n;
        return n;
    }

    void add_label(ModelElement& e, int label) {
        if (label < 0) return;
        if (static_cast<size_t>(label) >= e.label_histogram.size())
            e.label_histogram.resize(label + 1, 0.0);
        e.label_histogram[label] += 1.0;
    }

    struct CellKey {
        int64_t x, y, z;
        bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
    };
    struct CellHash {
        size_t operator()(const CellKey& k) const {
            return static_cast<size_t>(k.x * 73856093 ^ k.y * 19349663 ^ k.z * 83492791);
        }
    };

    static constexpr double kCell = 0.05;  // caps the association radius

    CellKey cell_of(const Vec3& p) const {
        return {static_cast<int64_t>(std::floor(p.x() / kCell)),
                static_cast<int64_t>(std::floor(p.y() / kCell)),
                static_cast<int64_t>(std::floor(p.z() / kCell))};
    }

    ModelElement* find_match(const Vec3& p, const Vec3& n, double cos_thresh) {
        CellKey center = cell_of(p);
        ModelElement* best = nullptr;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int64_t dz = -1; dz <= 1; ++dz)
            for (int64_t dy = -1; dy <= 1; ++dy)
                for (int64_t dx = -1; dx <= 1; ++dx) {
                    auto it = grid_.find({center.x + dx, center.y + dy, center.z + dz});
                    if (it == grid_.end()) continue;
                    for (size_t idx : it->second) {
                        ModelElement& e = elements_[idx];
                        double dist = (e.position - p).norm();
                        double assoc = std::min(params_.association_radius_factor * e.radius, kCell);
                        if (dist <= assoc && e.normal.dot(n) >= cos_thresh && dist < best_dist) {
                            best_dist = dist;
                            best = &e;
                        }
                    }
                }
        return best;
    }

    ModelParams params_;
    std::vector<ModelElement> elements_;
    std::unordered_map<CellKey, std::vector<size_t>, CellHash> grid_;
    int label_classes_ = 0;
};

}  // namespace cnnslam
