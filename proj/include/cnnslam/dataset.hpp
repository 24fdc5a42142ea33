#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cnnslam/errors.hpp"
#include "cnnslam/geometry.hpp"
#include "cnnslam/image.hpp"

namespace cnnslam {

constexpr int kWorkingWidth = 320;
constexpr int kWorkingHeight = 240;
constexpr double kAssocTolerance = 0.02;  // seconds, TUM tooling default

struct FrameRecord {
    double timestamp = 0;
    std::string rgb_path;
    std::optional<std::string> gt_depth_path;
    std::optional<RigidPose> gt_pose;  // camera-to-world, TUM convention
};

namespace detail {

inline std::vector<std::pair<double, std::string>> read_timestamp_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);
    std::vector<std::pair<double, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double ts;
        std::string rest;
        if (!(ss >> ts >> rest)) throw MalformedLine(lineno, "expected: timestamp path");
        out.emplace_back(ts, rest);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// TUM trajectory format: `timestamp tx ty tz qx qy qz qw`, camera-to-world.
inline std::vector<std::pair<double, RigidPose>> read_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);
    std::vector<std::pair<double, RigidPose>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double ts, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw MalformedLine(lineno, "expected 8 fields");
        out.emplace_back(ts, RigidPose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), {tx, ty, tz}));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

inline void write_trajectory(const std::vector<std::pair<double, RigidPose>>& poses,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    char buf[256];
    for (const auto& [ts, pose] : poses) {
        Eigen::Quaterniond q = pose.quaternion();
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", ts,
                      pose.translation.x(), pose.translation.y(), pose.translation.z(), q.x(),
                      q.y(), q.z(), q.w());
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path);
}

/// Loads an association file pairing rgb with optional depth, then attaches
/// ground-truth poses from groundtruth.txt when present in `root`.
/// Association lines are `ts rgb` or `ts_rgb rgb ts_depth depth`.
inline std::vector<FrameRecord> load_sequence(const std::string& root,
                                              const std::string& associations) {
    std::ifstream in(associations);
    if (!in) throw MissingFile(associations);

    std::vector<FrameRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        FrameRecord rec;
        if (tokens.size() == 2) {
            rec.timestamp = std::stod(tokens[0]);
            rec.rgb_path = (std::filesystem::path(root) / tokens[1]).string();
        } else if (tokens.size() == 4) {
            rec.timestamp = std::stod(tokens[0]);
            rec.rgb_path = (std::filesystem::path(root) / tokens[1]).string();
            rec.gt_depth_path = (std::filesystem::path(root) / tokens[3]).string();
        } else {
            throw MalformedLine(lineno, "expected 2 or 4 tokens, got " +
                                            std::to_string(tokens.size()));
        }
        records.push_back(std::move(rec));
    }
    std::sort(records.begin(), records.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.timestamp < b.timestamp; });

    auto gt_path = std::filesystem::path(root) / "groundtruth.txt";
    if (std::filesystem::exists(gt_path)) {
        auto gt = read_trajectory(gt_path.string());
        for (auto& rec : records) {
            auto it = std::lower_bound(gt.begin(), gt.end(), rec.timestamp,
                                       [](const auto& a, double t) { return a.first < t; });
            double best = kAssocTolerance + 1;
            const RigidPose* pose = nullptr;
            if (it != gt.end() && std::abs(it->first - rec.timestamp) < best) {
                best = std::abs(it->first - rec.timestamp);
                pose = &it->second;
            }
            if (it != gt.begin() && std::abs(std::prev(it)->first - rec.timestamp) < best) {
                best = std::abs(std::prev(it)->first - rec.timestamp);
                pose = &std::prev(it)->second;
            }
            if (pose && best <= kAssocTolerance) rec.gt_pose = *pose;
        }
    }
    return records;
}

/// 8-bit RGB -> grayscale [0,1], resampled to the working resolution.
inline IntensityImage to_intensity(const cv::Mat& rgb, int out_w = kWorkingWidth,
                                   int out_h = kWorkingHeight) {
    if (rgb.empty() || rgb.depth() != CV_8U)
        throw UnsupportedFormat("expected 8-bit image");
    cv::Mat channels;
    if (rgb.channels() == 3)
        channels = rgb;
    else if (rgb.channels() == 1)
        cv::cvtColor(rgb, channels, cv::COLOR_GRAY2BGR);
    else
        throw UnsupportedFormat("expected 1 or 3 channels");

    IntensityImage full(channels.cols, channels.rows);
    for (int y = 0; y < channels.rows; ++y) {
        const cv::Vec3b* row = channels.ptr<cv::Vec3b>(y);
        for (int x = 0; x < channels.cols; ++x) {
            // OpenCV loads BGR.
            float lum = (0.299f * row[x][2] + 0.587f * row[x][1] + 0.114f * row[x][0]) / 255.f;
            full.at(x, y) = lum;
        }
    }
    if (full.width() == out_w && full.height() == out_h) return full;
    return resize_bilinear(full, out_w, out_h);
}

inline IntensityImage load_intensity(const std::string& path, int out_w = kWorkingWidth,
                                     int out_h = kWorkingHeight) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw MissingFile(path);
    return to_intensity(img, out_w, out_h);
}

/// 16-bit PNG depth, TUM convention: meters = raw / divisor, raw 0 = invalid.
inline DepthMap load_depth_png(const std::string& path, double divisor = 5000.0) {
    if (!std::filesystem::exists(path)) throw MissingFile(path);
    cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (img.empty()) throw UnsupportedFormat("cannot decode " + path);
    if (img.type() != CV_16UC1) throw UnsupportedFormat("expected 16-bit single channel: " + path);
    DepthMap out(img.cols, img.rows);
    for (int y = 0; y < img.rows; ++y) {
        const uint16_t* row = img.ptr<uint16_t>(y);
        for (int x = 0; x < img.cols; ++x)
            out.at(x, y) = row[x] == 0 ? 0.f : static_cast<float>(row[x] / divisor);
    }
    return out;
}

inline void save_depth_png(const DepthMap& depth, const std::string& path,
                           double divisor = 5000.0) {
    cv::Mat img(depth.height(), depth.width(), CV_16UC1);
    for (int y = 0; y < depth.height(); ++y) {
        uint16_t* row = img.ptr<uint16_t>(y);
        for (int x = 0; x < depth.width(); ++x) {
            float d = depth.at(x, y);
            double raw = d > 0 ? std::round(d * divisor) : 0.0;
            row[x] = static_cast<uint16_t>(std::clamp(raw, 0.0, 65535.0));
        }
    }
    if (!cv::imwrite(path, img)) throw IoError("cannot write " + path);
}

inline LabelMap load_label_png(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingFile(path);
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw UnsupportedFormat("cannot decode " + path);
    LabelMap out(img.cols, img.rows);
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) out.at(x, y) = img.at<uint8_t>(y, x);
    return out;
}

inline void save_label_png(const LabelMap& labels, const std::string& path) {
    cv::Mat img(labels.height(), labels.width(), CV_8UC1);
    for (int y = 0; y < labels.height(); ++y)
        for (int x = 0; x < labels.width(); ++x) img.at<uint8_t>(y, x) = labels.at(x, y);
    if (!cv::imwrite(path, img)) throw IoError("cannot write " + path);
}

/// Raw 32-bit float binary depth: two int32 dims then row-major floats.
inline DepthMap load_depth_f32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path);
    int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || w <= 0 || h <= 0) throw UnsupportedFormat("bad f32 header: " + path);
    DepthMap out(w, h);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * 4));
    if (!in) throw UnsupportedFormat("truncated f32 file: " + path);
    return out;
}

inline void save_depth_f32(const DepthMap& depth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    int32_t w = depth.width(), h = depth.height();
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(depth.data()),
              static_cast<std::streamsize>(depth.size() * 4));
    if (!out) throw IoError("write failed for " + path);
}

/// Plain key=value camera config: fx fy cx cy width height [f_train].
struct CameraConfig {
    CameraIntrinsics intrinsics;
    std::optional<double> f_train;
};

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw MalformedLine(lineno, "expected key=value");
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline CameraConfig load_camera_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);
    auto kv = parse_key_values(in);
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("camera config missing key: " + key);
        return std::stod(it->second);
    };
    CameraConfig cfg;
    cfg.intrinsics = CameraIntrinsics(need("fx"), need("fy"), need("cx"), need("cy"),
                                      static_cast<int>(need("width")),
                                      static_cast<int>(need("height")));
    if (kv.count("f_train")) cfg.f_train = std::stod(kv.at("f_train"));
    return cfg;
}

}  // namespace cnnslam
