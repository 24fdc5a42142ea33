#pragma once

#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "cnnslam/errors.hpp"
#include "cnnslam/geometry.hpp"

namespace cnnslam {

struct GraphEdge {
    int from = 0, to = 0;
    RigidPose measurement;  // T_to composed with inverse(T_from) at edge creation
    Mat6 information = Mat6::Identity();
};

struct OptimizeReport {
    double initial_chi2 = 0;
    double final_chi2 = 0;
    int iterations = 0;
};

class PoseGraph {
public:
    void add_node(int id, const RigidPose& pose) { nodes_[id] = pose; }

    void add_edge(int from, int to, const RigidPose& measurement, const Mat6& information) {
        edges_.push_back({from, to, measurement, information});
    }

    const std::map<int, RigidPose>& nodes() const { return nodes_; }
    const std::vector<GraphEdge>& edges() const { return edges_; }
    RigidPose node_pose(int id) const { return nodes_.at(id); }
    void set_node_pose(int id, const RigidPose& pose) { nodes_.at(id) = pose; }

    /// Sequential edge to the previous key-frame plus proximity edges to all
    /// key-frames within fov_threshold of the new pose. Returns the edges added.
    std::vector<GraphEdge> add_keyframe_edges(int new_id, const RigidPose& new_pose,
                                              double fov_threshold, double sigma_edge = 0.01) {
        std::vector<GraphEdge> added;
        Mat6 info = Mat6::Identity() / (sigma_edge * sigma_edge);
        int prev_id = -1;
        for (const auto& [id, pose] : nodes_)
            if (id < new_id) prev_id = std::max(prev_id, id);
        add_node(new_id, new_pose);
        if (prev_id < 0) return added;

        auto make_edge = [&](int from) {
            GraphEdge e{from, new_id, new_pose.compose(nodes_.at(from).inverse()), info};
            edges_.push_back(e);
            added.push_back(e);
        };
        make_edge(prev_id);
        for (const auto& [id, pose] : nodes_) {
            if (id == new_id || id == prev_id) continue;
            if (pose_distance(new_pose, pose) < fov_threshold) make_edge(id);
        }
        return added;
    }

    Vec6 edge_error(const GraphEdge& e) const {
        return se3_log(
            e.measurement.inverse().compose(nodes_.at(e.to).compose(nodes_.at(e.from).inverse())));
    }

    double chi2() const {
        double sum = 0;
        for (const auto& e : edges_) {
            Vec6 err = edge_error(e);
            sum += err.dot(e.information * err);
        }
        return sum;
    }

    bool connected() const {
        if (nodes_.size() <= 1) return true;
        std::set<int> visited;
        std::queue<int> frontier;
        frontier.push(nodes_.begin()->first);
        visited.insert(nodes_.begin()->first);
        while (!frontier.empty()) {
            int cur = frontier.front();
            frontier.pop();
            for (const auto& e : edges_) {
                int next = -1;
                if (e.from == cur && !visited.count(e.to)) next = e.to;
                if (e.to == cur && !visited.count(e.from)) next = e.from;
                if (next >= 0) {
                    visited.insert(next);
                    frontier.push(next);
                }
            }
        }
        return visited.size() == nodes_.size();
    }

    /// Levenberg-damped Gauss-Newton on the se(3) manifold with the lowest
    /// node id held fixed as gauge anchor. Leaves poses unchanged on failure.
    OptimizeReport optimize(int max_iterations = 50, double rel_tolerance = 1e-8) {
        OptimizeReport report;
        report.initial_chi2 = chi2();
        report.final_chi2 = report.initial_chi2;
        if (nodes_.size() <= 1) return report;
        if (!connected()) throw NotConnected();
        if (edges_.empty()) return report;

        int anchor = nodes_.begin()->first;
        std::vector<int> ids;
        std::map<int, int> index;  // node id -> block index
        for (const auto& [id, pose] : nodes_)
            if (id != anchor) {
                index[id] = static_cast<int>(ids.size());
                ids.push_back(id);
            }
        const int dim = static_cast<int>(ids.size()) * 6;

        auto backup = nodes_;
        double lambda = 1e-6;
        double chi = report.initial_chi2;

        for (int iter = 0; iter < max_iterations; ++iter) {
            if (chi < 1e-20) break;  // already consistent; avoid noise-driven steps
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
            Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);

            for (const auto& e : edges_) {
                Vec6 err = edge_error(e);
                // Numeric Jacobians w.r.t. left-multiplicative increments.
                auto jacobian_for = [&](int node) {
                    Mat6 J;
                    const double h = 1e-6;
                    RigidPose saved = nodes_.at(node);
                    for (int k = 0; k < 6; ++k) {
                        Vec6 step = Vec6::Zero();
                        step[k] = h;
                        nodes_.at(node) = se3_exp(step).compose(saved);
                        Vec6 plus = edge_error(e);
                        nodes_.at(node) = se3_exp(-step).compose(saved);
                        Vec6 minus = edge_error(e);
                        nodes_.at(node) = saved;
                        J.col(k) = (plus - minus) / (2 * h);
                    }
                    return J;
                };

                bool from_free = e.from != anchor;
                bool to_free = e.to != anchor;
                Mat6 Jf, Jt;
                if (from_free) Jf = jacobian_for(e.from);
                if (to_free) Jt = jacobian_for(e.to);

                if (from_free) {
                    int i = index.at(e.from) * 6;
                    H.block<6, 6>(i, i) += Jf.transpose() * e.information * Jf;
                    b.segment<6>(i) += Jf.transpose() * e.information * err;
                }
                if (to_free) {
                    int j = index.at(e.to) * 6;
                    H.block<6, 6>(j, j) += Jt.transpose() * e.information * Jt;
                    b.segment<6>(j) += Jt.transpose() * e.information * err;
                }
                if (from_free && to_free) {
                    int i = index.at(e.from) * 6;
                    int j = index.at(e.to) * 6;
                    Mat6 cross = Jf.transpose() * e.information * Jt;
                    H.block<6, 6>(i, j) += cross;
                    H.block<6, 6>(j, i) += cross.transpose();
                }
            }

            Eigen::MatrixXd damped = H;
            damped.diagonal().array() += lambda * (H.diagonal().array().abs() + 1e-12);
            Eigen::LDLT<Eigen::MatrixXd> solver(damped);
            if (solver.info() != Eigen::Success) {
                nodes_ = backup;
                throw SingularSystem();
            }
            Eigen::VectorXd delta = solver.solve(-b);
            if (!delta.allFinite()) {
                nodes_ = backup;
                throw SingularSystem();
            }

            auto saved = nodes_;
            for (size_t n = 0; n < ids.size(); ++n) {
                Vec6 step = delta.segment<6>(static_cast<int>(n) * 6);
                nodes_.at(ids[n]) = se3_exp(step).compose(nodes_.at(ids[n]));
            }
            double new_chi = chi2();
            ++report.iterations;
            if (new_chi <= chi) {
                double rel = chi > 0 ? (chi - new_chi) / chi : 0;
                chi = new_chi;
                lambda = std::max(lambda * 0.5, 1e-12);
                if (rel < rel_tolerance) break;
            } else {
                nodes_ = saved;
                lambda *= 10;
                if (lambda > 1e8) break;
            }
        }
        report.final_chi2 = chi;
        return report;
    }

    /// g2o-style text dump (VERTEX_SE3:QUAT / EDGE_SE3:QUAT), camera-to-world.
    void dump(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path);
        for (const auto& [id, pose] : nodes_) {
            RigidPose cw = pose.inverse();
            Eigen::Quaterniond q = cw.quaternion();
            out << "VERTEX_SE3:QUAT " << id << " " << cw.translation.x() << " "
                << cw.translation.y() << " " << cw.translation.z() << " " << q.x() << " " << q.y()
                << " " << q.z() << " " << q.w() << "\n";
        }
        for (const auto& e : edges_) {
            RigidPose m = e.measurement.inverse();
            Eigen::Quaterniond q = m.quaternion();
            out << "EDGE_SE3:QUAT " << e.from << " " << e.to << " " << m.translation.x() << " "
                << m.translation.y() << " " << m.translation.z() << " " << q.x() << " " << q.y()
                << " " << q.z() << " " << q.w();
            for (int r = 0; r < 6; ++r)
                for (int c = r; c < 6; ++c) out << " " << e.information(r, c);
            out << "\n";
        }
    }

private:
    std::map<int, RigidPose> nodes_;
    std::vector<GraphEdge> edges_;
};

}  // namespace cnnslam
