#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>

#include "cnnslam/config.hpp"
#include "cnnslam/dataset.hpp"
#include "cnnslam/evaluation.hpp"
#include "cnnslam/global_model.hpp"
#include "cnnslam/keyframe.hpp"
#include "cnnslam/pose_graph.hpp"
#include "cnnslam/prediction.hpp"
#include "cnnslam/refinement.hpp"
#include "cnnslam/tracking.hpp"

namespace cnnslam {

struct RunArtifacts {
    std::string output_dir;
    std::string trajectory_path;
    std::string keyframe_dir;
    std::string model_path;
    std::string stats_path;
    size_t frame_count = 0;
    size_t keyframe_count = 0;
};

namespace detail {

/// Bounded FIFO handing finished key-frames to the key-frame lane for global
/// model integration. Order-preserving, so the model stays deterministic.
class IntegrationQueue {
public:
    explicit IntegrationQueue(size_t capacity = 8) : capacity_(capacity) {}

    void push(KeyFramePtr kf) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return queue_.size() < capacity_; });
        queue_.push_back(std::move(kf));
        not_empty_.notify_one();
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
    }

    KeyFramePtr pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || closed_; });
        if (queue_.empty()) return nullptr;
        KeyFramePtr kf = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        return kf;
    }

private:
    size_t capacity_;
    std::deque<KeyFramePtr> queue_;
    std::mutex mutex_;
    std::condition_variable not_empty_, not_full_;
    bool closed_ = false;
};

class PredictionSource {
public:
    virtual ~PredictionSource() = default;
    virtual Prediction fetch(int frame_id) = 0;
};

class DiskPredictionSource : public PredictionSource {
public:
    explicit DiskPredictionSource(const std::string& dir) : provider_(dir) {}
    Prediction fetch(int frame_id) override { return provider_.fetch(frame_id); }
    double focal() const { return provider_.provider_focal(); }

private:
    PredictionProvider provider_;
};

/// Degraded ground-truth stand-in for the CNN; deterministic per frame.
class DegradedGtSource : public PredictionSource {
public:
    DegradedGtSource(std::vector<FrameRecord> frames, const PipelineConfig& cfg, double f_tr,
                     int w, int h)
        : frames_(std::move(frames)), cfg_(cfg), f_tr_(f_tr), w_(w), h_(h) {}

    Prediction fetch(int frame_id) override {
        const auto& rec = frames_.at(frame_id);
        if (!rec.gt_depth_path)
            throw MissingPrediction("no ground-truth depth for frame " +
                                    std::to_string(frame_id));
        DepthMap gt = load_depth_png(*rec.gt_depth_path, cfg_.depth_divisor);
        if (gt.width() != w_ || gt.height() != h_) gt = resize_nearest(gt, w_, h_);
        Prediction pred;
        pred.depth = synthesize_degraded(gt, cfg_.synth_blur_sigma, cfg_.synth_scale_bias,
                                         cfg_.synth_noise_sigma, cfg_.seed + frame_id, f_tr_);
        return pred;
    }

private:
    std::vector<FrameRecord> frames_;
    PipelineConfig cfg_;
    double f_tr_;
    int w_, h_;
};

}  // namespace detail

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

    RunArtifacts run() {
        namespace fs = std::filesystem;
        fs::create_directories(cfg_.output_dir);
        fs::create_directories(fs::path(cfg_.output_dir) / "keyframes");

        CameraConfig cam = load_camera_config(cfg_.camera_config);
        K_ = cam.intrinsics.scaled(cfg_.working_width, cfg_.working_height);
        auto frames = load_sequence(cfg_.dataset_root, cfg_.associations);
        if (frames.empty()) throw ConfigError("empty sequence");

        std::unique_ptr<detail::PredictionSource> source;
        if (!cfg_.prediction_dir.empty()) {
            source = std::make_unique<detail::DiskPredictionSource>(cfg_.prediction_dir);
        } else {
            double f_tr = cam.f_train.value_or(K_.fx);
            source = std::make_unique<detail::DegradedGtSource>(frames, cfg_, f_tr,
                                                                cfg_.working_width,
                                                                cfg_.working_height);
        }

        TrackingParams track_params;
        track_params.huber_delta = cfg_.huber_delta;
        track_params.sigma_intensity = cfg_.sigma_intensity;
        track_params.gradient_threshold = cfg_.gradient_threshold;
        track_params.pyramid_levels = cfg_.pyramid_levels;
        track_params.max_iterations = cfg_.max_iterations;
        track_params.min_valid_ratio = cfg_.min_valid_ratio;

        RefinementParams refine_params;
        refine_params.sigma_intensity = cfg_.sigma_intensity;
        refine_params.min_depth = cfg_.min_depth;
        refine_params.max_depth = cfg_.max_depth;
        refine_params.prior_sigma_factor = cfg_.prior_sigma_factor;
        refine_params.ambiguity_ratio = cfg_.ambiguity_ratio;
        refine_params.max_search_steps = cfg_.max_search_steps;

        KeyframeFusionParams fusion_params;
        fusion_params.sigma_p_sq = cfg_.sigma_p_sq;
        fusion_params.propagation_exponent = cfg_.propagation_exponent;

        ModelParams model_params;
        model_params.integration_stride = cfg_.model_stride;
        GlobalModel model(model_params);

        // Key-frame lane: consumes fully published key-frames in FIFO order.
        detail::IntegrationQueue queue;
        std::thread keyframe_lane([&] {
            while (KeyFramePtr kf = queue.pop()) model.integrate_keyframe(*kf, K_);
        });

        std::ofstream log(fs::path(cfg_.output_dir) / "run.log");
        std::vector<std::pair<double, RigidPose>> trajectory;  // camera-to-world
        double track_ms_total = 0;
        size_t tracked_frames = 0;

        auto flush_artifacts = [&](RunArtifacts& art) {
            queue.close();
            if (keyframe_lane.joinable()) keyframe_lane.join();
            write_trajectory(trajectory, art.trajectory_path);
            dump_keyframes(art.keyframe_dir);
            model.save(art.model_path);
            std::ofstream stats(art.stats_path);
            stats << "frame_count = " << trajectory.size() << "\n";
            stats << "keyframe_count = " << keyframes_.size() << "\n";
            char buf[64];
            std::snprintf(buf, sizeof(buf), "mean_track_ms = %.3f\n",
                          tracked_frames ? track_ms_total / tracked_frames : 0.0);
            stats << buf;
        };

        RunArtifacts art;
        art.output_dir = cfg_.output_dir;
        art.trajectory_path = (fs::path(cfg_.output_dir) / "trajectory.txt").string();
        art.keyframe_dir = (fs::path(cfg_.output_dir) / "keyframes").string();
        art.model_path = (fs::path(cfg_.output_dir) / "model.bin").string();
        art.stats_path = (fs::path(cfg_.output_dir) / "stats.txt").string();

        RigidPose last_world_pose;  // world-to-camera of the previous frame
        try {
            for (size_t t = 0; t < frames.size(); ++t) {
                IntensityImage intensity =
                    load_intensity(frames[t].rgb_path, cfg_.working_width, cfg_.working_height);

                if (keyframes_.empty()) {
                    auto kf = create_keyframe(0, static_cast<int>(t), frames[t].timestamp,
                                              RigidPose::identity(), intensity, *source,
                                              fusion_params, nullptr);
                    graph_.add_node(0, kf->pose);
                    queue.push(kf);
                    trajectory.emplace_back(frames[t].timestamp, RigidPose::identity());
                    log << "frame 0: keyframe 0 created\n";
                    continue;
                }

                KeyFramePtr nearest = find_nearest_keyframe(last_world_pose, keyframes_);
                RigidPose T_init = last_world_pose.compose(nearest->pose.inverse());
                auto t0 = std::chrono::steady_clock::now();
                TrackingResult tracked;
                try {
                    tracked = estimate_pose(*nearest, intensity, K_, T_init, track_params);
                } catch (const TrackingLost& e) {
                    log << "frame " << t << ": " << e.what() << "\n";
                    flush_artifacts(art);
                    art.frame_count = trajectory.size();
                    art.keyframe_count = keyframes_.size();
                    throw;
                }
                track_ms_total += std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - t0)
                                      .count();
                ++tracked_frames;

                last_world_pose = tracked.world_pose;
                trajectory.emplace_back(frames[t].timestamp, tracked.world_pose.inverse());

                KeyframePolicy policy;
                policy.max_translation =
                    cfg_.kf_translation_factor * std::max(1e-6, mean_valid(nearest->depth));
                policy.max_rotation = cfg_.kf_max_rotation_deg * M_PI / 180.0;

                if (should_create_keyframe(tracked.world_pose, *nearest, policy)) {
                    int new_id = static_cast<int>(keyframes_.size());
                    auto kf = create_keyframe(new_id, static_cast<int>(t), frames[t].timestamp,
                                              tracked.world_pose, intensity, *source,
                                              fusion_params, nearest.get());
                    graph_.add_keyframe_edges(new_id, kf->pose, cfg_.fov_threshold,
                                              cfg_.sigma_edge);
                    graph_.optimize();
                    apply_optimized_poses();
                    last_world_pose = keyframes_.back()->pose;
                    queue.push(keyframes_.back());
                    log << "frame " << t << ": keyframe " << new_id << " created\n";
                } else {
                    ObservationStats stats;
                    ObservationMaps obs = compute_observations(
                        *nearest, intensity, tracked.relative_pose, K_, refine_params, &stats);
                    KeyFrame refined = refine_keyframe(*nearest, obs);
                    publish_keyframe(std::make_shared<const KeyFrame>(std::move(refined)));
                    log << "frame " << t << ": refined keyframe " << nearest->id << " (matched "
                        << stats.matched << ", degenerate " << stats.degenerate << ", ambiguous "
                        << stats.ambiguous << ")\n";
                }
            }
        } catch (const TrackingLost&) {
            throw;
        }

        flush_artifacts(art);
        art.frame_count = trajectory.size();
        art.keyframe_count = keyframes_.size();

        // Fig. 7-style export for convenience; `export` regenerates from model.bin.
        if (!model.elements().empty())
            model.export_ply((fs::path(cfg_.output_dir) / "model_rgb.ply").string(), "rgb");
        graph_.dump((fs::path(cfg_.output_dir) / "pose_graph.g2o").string());
        return art;
    }

    const std::vector<KeyFramePtr>& keyframes() const { return keyframes_; }
    const PoseGraph& graph() const { return graph_; }

private:
    KeyFramePtr create_keyframe(int id, int frame_index, double timestamp, const RigidPose& pose,
                                const IntensityImage& intensity,
                                detail::PredictionSource& source,
                                const KeyframeFusionParams& fusion_params,
                                const KeyFrame* nearest) {
        Prediction pred = source.fetch(frame_index);
        DepthMap& raw = pred.depth.depth;
        if (raw.width() != cfg_.working_width || raw.height() != cfg_.working_height)
            raw = resize_nearest(raw, cfg_.working_width, cfg_.working_height);

        auto kf = std::make_shared<KeyFrame>();
        kf->id = id;
        kf->pose = pose;
        kf->timestamp = timestamp;
        kf->intensity = intensity;
        kf->depth = adjust_scale(pred.depth, K_.fx);
        if (pred.labels) {
            if (pred.labels->labels.width() != cfg_.working_width ||
                pred.labels->labels.height() != cfg_.working_height)
                pred.labels->labels =
                    resize_nearest(pred.labels->labels, cfg_.working_width, cfg_.working_height);
            kf->labels = std::move(pred.labels);
        }

        RigidPose T_nearest_from_new =
            nearest ? nearest->pose.compose(pose.inverse()) : RigidPose::identity();
        kf->uncertainty =
            init_uncertainty(kf->depth, nearest, T_nearest_from_new, K_, cfg_.u_max);
        if (nearest)
            fuse_new_keyframe(kf->depth, kf->uncertainty, *nearest, T_nearest_from_new, K_,
                              fusion_params);

        KeyFramePtr ptr = kf;
        keyframes_.push_back(ptr);
        return ptr;
    }

    void publish_keyframe(KeyFramePtr kf) {
        for (auto& existing : keyframes_)
            if (existing->id == kf->id) {
                existing = std::move(kf);
                return;
            }
    }

    /// Batch swap of key-frame poses after graph optimization.
    void apply_optimized_poses() {
        std::vector<KeyFramePtr> updated;
        updated.reserve(keyframes_.size());
        for (const auto& kf : keyframes_) {
            RigidPose optimized = graph_.node_pose(kf->id);
            auto copy = std::make_shared<KeyFrame>(*kf);
            copy->pose = optimized;
            updated.push_back(std::move(copy));
        }
        keyframes_ = std::move(updated);
    }

    void dump_keyframes(const std::string& dir) const {
        namespace fs = std::filesystem;
        std::ofstream index(fs::path(dir) / "index.txt");
        char name[64];
        for (const auto& kf : keyframes_) {
            std::snprintf(name, sizeof(name), "depth_%06d.png", kf->id);
            save_depth_png(kf->depth, (fs::path(dir) / name).string(), cfg_.depth_divisor);
            std::snprintf(name, sizeof(name), "uncertainty_%06d.f32", kf->id);
            save_depth_f32(kf->uncertainty, (fs::path(dir) / name).string());
            std::snprintf(name, sizeof(name), "%d %.6f %d\n", kf->id, kf->timestamp,
                          kf->generation);
            index << name;
        }
    }

    PipelineConfig cfg_;
    CameraIntrinsics K_;
    std::vector<KeyFramePtr> keyframes_;
    PoseGraph graph_;
};

inline std::vector<std::pair<double, std::string>> read_depth_list(const std::string& path,
                                                                   const std::string& root) {
    auto listed = detail::read_timestamp_file(path);
    for (auto& [ts, rel] : listed) rel = (std::filesystem::path(root) / rel).string();
    return listed;
}

/// Offline evaluation over a run directory; gt_dir is a TUM-layout dataset
/// root (groundtruth.txt and optionally depth.txt + depth files).
inline MetricsReport evaluate_run(const std::string& run_dir, const std::string& gt_dir,
                                  Alignment align = Alignment::Rigid,
                                  double depth_divisor = 5000.0) {
    namespace fs = std::filesystem;
    MetricsReport rep;

    auto est = read_trajectory((fs::path(run_dir) / "trajectory.txt").string());
    rep.frame_count = est.size();

    auto gt_traj_path = fs::path(gt_dir) / "groundtruth.txt";
    if (fs::exists(gt_traj_path)) {
        auto gt = read_trajectory(gt_traj_path.string());
        auto pair = associate_trajectories(est, gt);
        if (pair.estimated.size() >= 2) rep.ate = absolute_trajectory_error(pair, align);
    }

    // Depth accuracy per key-frame, gt associated by timestamp.
    auto index_path = fs::path(run_dir) / "keyframes" / "index.txt";
    auto depth_list_path = fs::path(gt_dir) / "depth.txt";
    if (fs::exists(index_path) && fs::exists(depth_list_path)) {
        auto gt_depths = read_depth_list(depth_list_path.string(), gt_dir);
        std::ifstream index(index_path);
        std::vector<DepthMap> est_maps, gt_maps;
        int id, gen;
        double ts;
        while (index >> id >> ts >> gen) {
            auto it = std::min_element(gt_depths.begin(), gt_depths.end(),
                                       [&](const auto& a, const auto& b) {
                                           return std::abs(a.first - ts) < std::abs(b.first - ts);
                                       });
            if (it == gt_depths.end() || std::abs(it->first - ts) > kAssocTolerance) continue;
            char name[64];
            std::snprintf(name, sizeof(name), "depth_%06d.png", id);
            DepthMap est_map = load_depth_png((fs::path(run_dir) / "keyframes" / name).string(),
                                              depth_divisor);
            DepthMap gt_map = load_depth_png(it->second, depth_divisor);
            if (!gt_map.same_size(est_map))
                gt_map = resize_nearest(gt_map, est_map.width(), est_map.height());
            est_maps.push_back(std::move(est_map));
            gt_maps.push_back(std::move(gt_map));
        }
        rep.keyframe_count = est_maps.size();
        if (!gt_maps.empty()) rep.depth = percent_correct_depth(est_maps, gt_maps);
    }

    auto stats_path = fs::path(run_dir) / "stats.txt";
    if (fs::exists(stats_path)) {
        std::ifstream in(stats_path);
        for (const auto& [key, value] : parse_key_values(in)) {
            if (key == "mean_track_ms") rep.mean_track_ms = std::stod(value);
            if (key == "keyframe_count" && rep.keyframe_count == 0)
                rep.keyframe_count = std::stoul(value);
        }
    }
    return rep;
}

}  // namespace cnnslam
