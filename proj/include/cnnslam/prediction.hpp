#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cnnslam/dataset.hpp"
#include "cnnslam/errors.hpp"
#include "cnnslam/image.hpp"

namespace cnnslam {

/// Raw depth map as regressed by the provider, before focal-ratio adjustment.
struct PredictedDepthMap {
    DepthMap depth;
    double provider_focal = 0;  // f_tr, pixels
};

struct SemanticLabelMap {
    LabelMap labels;
    int class_count = 0;
    std::vector<std::string> class_names;
};

struct Prediction {
    PredictedDepthMap depth;
    std::optional<SemanticLabelMap> labels;
};

/// D(u) = (f_cur / f_tr) * D~(u). The single focal ratio uses fx.
inline DepthMap adjust_scale(const PredictedDepthMap& pred, double f_cur) {
    if (pred.provider_focal <= 0 || f_cur <= 0) throw NonPositiveFocal();
    double ratio = f_cur / pred.provider_focal;
    DepthMap out = pred.depth;
    for (float& v : out.values()) v = static_cast<float>(v * ratio);
    return out;
}

/// CNN stand-in for tests: blur + global scale bias + multiplicative noise,
/// deterministic given the seed. Holes are inpainted by nearest valid depth
/// first so the output is dense.
inline PredictedDepthMap synthesize_degraded(const DepthMap& gt_depth, double blur_sigma,
                                             double scale_bias, double noise_sigma,
                                             uint64_t seed, double provider_focal) {
    DepthMap dense = gt_depth;
    // nearest-valid inpainting: forward then backward sweep
    auto sweep = [&](bool forward) {
        int n = static_cast<int>(dense.size());
        float last = 0.f;
        for (int i = 0; i < n; ++i) {
            int idx = forward ? i : n - 1 - i;
            float& v = dense.values()[idx];
            if (v > 0)
                last = v;
            else if (last > 0)
                v = last;
        }
    };
    sweep(true);
    sweep(false);

    DepthMap blurred = dense;
    if (blur_sigma > 0) {
        int radius = std::max(1, static_cast<int>(std::ceil(3 * blur_sigma)));
        std::vector<double> kernel(2 * radius + 1);
        double sum = 0;
        for (int i = -radius; i <= radius; ++i) {
            kernel[i + radius] = std::exp(-0.5 * i * i / (blur_sigma * blur_sigma));
            sum += kernel[i + radius];
        }
        for (double& k : kernel) k /= sum;
        DepthMap tmp(dense.width(), dense.height());
        for (int y = 0; y < dense.height(); ++y)
            for (int x = 0; x < dense.width(); ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * dense.at(std::clamp(x + i, 0, dense.width() - 1), y);
                tmp.at(x, y) = static_cast<float>(acc);
            }
        for (int y = 0; y < dense.height(); ++y)
            for (int x = 0; x < dense.width(); ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, dense.height() - 1));
                blurred.at(x, y) = static_cast<float>(acc);
            }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (float& v : blurred.values()) {
        double noise = noise_sigma > 0 ? 1.0 + noise_sigma * gauss(rng) : 1.0;
        v = static_cast<float>(std::max(1e-6, v * scale_bias * noise));
    }
    return {std::move(blurred), provider_focal};
}

/// Disk-backed prediction source. Layout:
///   <dir>/manifest.txt          key=value: f_tr, divisor (optional), classes (optional, comma list)
///   <dir>/<frame_id>.png|.f32   depth (16-bit PNG with divisor, or float binary)
///   <dir>/<frame_id>_labels.png optional 8-bit class ids
class PredictionProvider {
public:
    explicit PredictionProvider(const std::string& dir) : dir_(dir) {
        auto manifest = std::filesystem::path(dir) / "manifest.txt";
        std::ifstream in(manifest);
        if (!in) throw MissingFile(manifest.string());
        auto kv = parse_key_values(in);
        if (!kv.count("f_tr")) throw ConfigError("manifest missing f_tr");
        f_tr_ = std::stod(kv.at("f_tr"));
        if (f_tr_ <= 0) throw NonPositiveFocal("manifest f_tr must be > 0");
        if (kv.count("divisor")) divisor_ = std::stod(kv.at("divisor"));
        if (kv.count("classes")) {
            std::istringstream ss(kv.at("classes"));
            std::string name;
            while (std::getline(ss, name, ',')) class_names_.push_back(name);
        }
    }

    double provider_focal() const { return f_tr_; }
    const std::vector<std::string>& class_names() const { return class_names_; }

    static std::string frame_name(int frame_id) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%06d", frame_id);
        return buf;
    }

    Prediction fetch(int frame_id) const {
        auto base = std::filesystem::path(dir_) / frame_name(frame_id);
        DepthMap depth;
        if (std::filesystem::exists(base.string() + ".f32"))
            depth = load_depth_f32(base.string() + ".f32");
        else if (std::filesystem::exists(base.string() + ".png"))
            depth = load_depth_png(base.string() + ".png", divisor_);
        else
            throw MissingPrediction("frame " + frame_name(frame_id) + " in " + dir_);

        for (float v : depth.values())
            if (!(v > 0) || !std::isfinite(v))
                throw InvalidPrediction("non-dense prediction for frame " + frame_name(frame_id));

        Prediction pred;
        pred.depth = {std::move(depth), f_tr_};

        auto label_path = base.string() + "_labels.png";
        if (std::filesystem::exists(label_path)) {
            SemanticLabelMap sem;
            sem.labels = load_label_png(label_path);
            sem.class_names = class_names_;
            sem.class_count = static_cast<int>(class_names_.size());
            if (sem.class_count == 0) {
                int max_id = 0;
                for (uint8_t v : sem.labels.values()) max_id = std::max<int>(max_id, v);
                sem.class_count = max_id + 1;
            }
            for (uint8_t v : sem.labels.values())
                if (v >= sem.class_count)
                    throw InvalidPrediction("label id out of range for frame " + frame_name(frame_id));
            pred.labels = std::move(sem);
        }
        return pred;
    }

private:
    std::string dir_;
    double f_tr_ = 0;
    double divisor_ = 5000.0;
    std::vector<std::string> class_names_;
};

}  // namespace cnnslam
