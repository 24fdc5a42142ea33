#pragma once

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cnnslam/dataset.hpp"
#include "cnnslam/errors.hpp"

namespace cnnslam {

/// Every tunable of the pipeline, plain key=value on disk, with env var
/// overrides under the CNNSLAM_ prefix.
struct PipelineConfig {
    // dataset
    std::string dataset_root;
    std::string associations;   // default: <dataset_root>/associations.txt
    std::string camera_config;  // default: <dataset_root>/camera.txt
    double depth_divisor = 5000.0;

    // predictions: either a provider directory or degraded-GT synthesis
    std::string prediction_dir;
    bool synthesize_predictions = false;
    double synth_blur_sigma = 3.0;
    double synth_scale_bias = 1.0;
    double synth_noise_sigma = 0.0;

    // working resolution
    int working_width = 320;
    int working_height = 240;

    // tracking
    double huber_delta = 3.0;
    double sigma_intensity = 0.03;
    double gradient_threshold = 0.02;
    int pyramid_levels = 3;
    int max_iterations = 20;
    double min_valid_ratio = 0.2;

    // key-frame policy and fusion
    double kf_translation_factor = 0.15;  // times mean key-frame depth
    double kf_max_rotation_deg = 10.0;
    double sigma_p_sq = 0.01;
    double u_max = 4.0;
    double propagation_exponent = 1.0;

    // refinement
    double min_depth = 0.1;
    double max_depth = 10.0;
    double prior_sigma_factor = 2.0;
    double ambiguity_ratio = 0.9;
    int max_search_steps = 100;

    // pose graph
    double fov_threshold = 0.3;
    double sigma_edge = 0.01;

    // global model
    int model_stride = 1;

    // run
    std::string output_dir = "out";
    uint64_t seed = 0;

    using Setter = std::function<void(PipelineConfig&, const std::string&)>;

    static const std::vector<std::pair<std::string, Setter>>& fields() {
        auto str = [](std::string PipelineConfig::* f) {
            return [f](PipelineConfig& c, const std::string& v) { c.*f = v; };
        };
        auto num = [](double PipelineConfig::* f) {
            return [f](PipelineConfig& c, const std::string& v) { c.*f = std::stod(v); };
        };
        auto integer = [](int PipelineConfig::* f) {
            return [f](PipelineConfig& c, const std::string& v) { c.*f = std::stoi(v); };
        };
        static const std::vector<std::pair<std::string, Setter>> table = {
            {"dataset_root", str(&PipelineConfig::dataset_root)},
            {"associations", str(&PipelineConfig::associations)},
            {"camera_config", str(&PipelineConfig::camera_config)},
            {"depth_divisor", num(&PipelineConfig::depth_divisor)},
            {"prediction_dir", str(&PipelineConfig::prediction_dir)},
            {"synthesize_predictions",
             [](PipelineConfig& c, const std::string& v) {
                 c.synthesize_predictions = (v == "1" || v == "true");
             }},
            {"synth_blur_sigma", num(&PipelineConfig::synth_blur_sigma)},
            {"synth_scale_bias", num(&PipelineConfig::synth_scale_bias)},
            {"synth_noise_sigma", num(&PipelineConfig::synth_noise_sigma)},
            {"working_width", integer(&PipelineConfig::working_width)},
            {"working_height", integer(&PipelineConfig::working_height)},
            {"huber_delta", num(&PipelineConfig::huber_delta)},
            {"sigma_intensity", num(&PipelineConfig::sigma_intensity)},
            {"gradient_threshold", num(&PipelineConfig::gradient_threshold)},
            {"pyramid_levels", integer(&PipelineConfig::pyramid_levels)},
            {"max_iterations", integer(&PipelineConfig::max_iterations)},
            {"min_valid_ratio", num(&PipelineConfig::min_valid_ratio)},
            {"kf_translation_factor", num(&PipelineConfig::kf_translation_factor)},
            {"kf_max_rotation_deg", num(&PipelineConfig::kf_max_rotation_deg)},
            {"sigma_p_sq", num(&PipelineConfig::sigma_p_sq)},
            {"u_max", num(&PipelineConfig::u_max)},
            {"propagation_exponent", num(&PipelineConfig::propagation_exponent)},
            {"min_depth", num(&PipelineConfig::min_depth)},
            {"max_depth", num(&PipelineConfig::max_depth)},
            {"prior_sigma_factor", num(&PipelineConfig::prior_sigma_factor)},
            {"ambiguity_ratio", num(&PipelineConfig::ambiguity_ratio)},
            {"max_search_steps", integer(&PipelineConfig::max_search_steps)},
            {"fov_threshold", num(&PipelineConfig::fov_threshold)},
            {"sigma_edge", num(&PipelineConfig::sigma_edge)},
            {"model_stride", integer(&PipelineConfig::model_stride)},
            {"output_dir", str(&PipelineConfig::output_dir)},
            {"seed",
             [](PipelineConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
        };
        return table;
    }

    void apply(const std::string& key, const std::string& value) {
        for (const auto& [name, setter] : fields())
            if (name == key) {
                setter(*this, value);
                return;
            }
        throw ConfigError("unknown key: " + key);
    }

    void apply_env_overrides() {
        for (const auto& [name, setter] : fields()) {
            std::string env = "CNNSLAM_" + name;
            for (auto& c : env) c = static_cast<char>(std::toupper(c));
            if (const char* v = std::getenv(env.c_str())) setter(*this, v);
        }
    }

    static PipelineConfig from_file(const std::string& path, bool env_overrides = true) {
        std::ifstream in(path);
        if (!in) throw MissingFile(path);
        PipelineConfig cfg;
        for (const auto& [key, value] : parse_key_values(in)) cfg.apply(key, value);
        if (env_overrides) cfg.apply_env_overrides();
        if (cfg.dataset_root.empty()) throw ConfigError("dataset_root is required");
        if (cfg.associations.empty()) cfg.associations = cfg.dataset_root + "/associations.txt";
        if (cfg.camera_config.empty()) cfg.camera_config = cfg.dataset_root + "/camera.txt";
        if (cfg.prediction_dir.empty() && !cfg.synthesize_predictions)
            throw ConfigError("set prediction_dir or synthesize_predictions=1");
        return cfg;
    }

    void print(std::ostream& out) const {
        char buf[64];
        auto fmt = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%g", v);
            return std::string(buf);
        };
        out << "dataset_root = " << dataset_root << "\n"
            << "associations = " << associations << "\n"
            << "camera_config = " << camera_config << "\n"
            << "depth_divisor = " << fmt(depth_divisor) << "\n"
            << "prediction_dir = " << prediction_dir << "\n"
            << "synthesize_predictions = " << (synthesize_predictions ? 1 : 0) << "\n"
            << "synth_blur_sigma = " << fmt(synth_blur_sigma) << "\n"
            << "synth_scale_bias = " << fmt(synth_scale_bias) << "\n"
            << "synth_noise_sigma = " << fmt(synth_noise_sigma) << "\n"
            << "working_width = " << working_width << "\n"
            << "working_height = " << working_height << "\n"
            << "huber_delta = " << fmt(huber_delta) << "\n"
            << "sigma_intensity = " << fmt(sigma_intensity) << "\n"
            << "gradient_threshold = " << fmt(gradient_threshold) << "\n"
            << "pyramid_levels = " << pyramid_levels << "\n"
            << "max_iterations = " << max_iterations << "\n"
            << "min_valid_ratio = " << fmt(min_valid_ratio) << "\n"
            << "kf_translation_factor = " << fmt(kf_translation_factor) << "\n"
            << "kf_max_rotation_deg = " << fmt(kf_max_rotation_deg) << "\n"
            << "sigma_p_sq = " << fmt(sigma_p_sq) << "\n"
            << "u_max = " << fmt(u_max) << "\n"
            << "propagation_exponent = " << fmt(propagation_exponent) << "\n"
            << "min_depth = " << fmt(min_depth) << "\n"
            << "max_depth = " << fmt(max_depth) << "\n"
            << "prior_sigma_factor = " << fmt(prior_sigma_factor) << "\n"
            << "ambiguity_ratio = " << fmt(ambiguity_ratio) << "\n"
            << "max_search_steps = " << max_search_steps << "\n"
            << "fov_threshold = " << fmt(fov_threshold) << "\n"
            << "sigma_edge = " << fmt(sigma_edge) << "\n"
            << "model_stride = " << model_stride << "\n"
            << "output_dir = " << output_dir << "\n"
            << "seed = " << seed << "\n";
    }
};

}  // namespace cnnslam
