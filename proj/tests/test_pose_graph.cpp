#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cnnslam/pose_graph.hpp"

using namespace cnnslam;

namespace {

RigidPose pose_xyz(double x, double y, double z) {
    RigidPose p;
    p.translation = Vec3(x, y, z);
    return p;
}

}  // namespace

TEST_CASE("edge measurement and error conventions") {
    PoseGraph g;
    RigidPose a = se3_exp((Vec6() << 0.1, 0.2, -0.1, 0.05, -0.02, 0.1).finished());
    RigidPose b = se3_exp((Vec6() << -0.3, 0.1, 0.4, -0.1, 0.2, 0.0).finished());
    g.add_node(0, a);
    auto added = g.add_keyframe_edges(1, b, 0.0);
    REQUIRE(added.size() == 1);

    // at creation the edge is consistent: zero error, zero chi2
    CHECK(g.edge_error(added[0]).norm() < 1e-12);
    CHECK(g.chi2() < 1e-12);

    // measurement recomposes b from a
    RigidPose recomposed = added[0].measurement.compose(a);
    CHECK((recomposed.rotation - b.rotation).norm() < 1e-12);
    CHECK((recomposed.translation - b.translation).norm() < 1e-12);

    // perturbing the new node makes chi2 the weighted squared increment
    Vec6 d = (Vec6() << 0.01, 0, 0, 0, 0, 0).finished();
    g.set_node_pose(1, se3_exp(d).compose(b));
    double sigma = 0.01;
    CHECK(g.chi2() == doctest::Approx(d.squaredNorm() / (sigma * sigma)).epsilon(1e-6));
}

TEST_CASE("proximity edges connect nearby nodes only") {
    PoseGraph g;
    g.add_node(0, pose_xyz(0, 0, 0));
    g.add_keyframe_edges(1, pose_xyz(0.2, 0, 0), 0.3);
    g.add_keyframe_edges(2, pose_xyz(5.0, 0, 0), 0.3);   // far from everything
    auto added = g.add_keyframe_edges(3, pose_xyz(0.25, 0, 0), 0.3);

    // sequential edge to node 2 plus proximity edges to 0 and 1
    REQUIRE(added.size() == 3);
    CHECK(added[0].from == 2);
    std::set<int> proximity{added[1].from, added[2].from};
    CHECK(proximity == std::set<int>{0, 1});
}

TEST_CASE("connectivity check and NotConnected") {
    PoseGraph g;
    g.add_node(0, pose_xyz(0, 0, 0));
    g.add_node(1, pose_xyz(1, 0, 0));
    CHECK_FALSE(g.connected());
    CHECK_THROWS_AS(g.optimize(), NotConnected);

    g.add_edge(0, 1, pose_xyz(1, 0, 0), Mat6::Identity());
    CHECK(g.connected());

    PoseGraph single;
    single.add_node(0, RigidPose::identity());
    CHECK(single.connected());
}

TEST_CASE("optimize is a no-op on a consistent graph and fixes the anchor") {
    PoseGraph g;
    std::vector<RigidPose> truth;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 5; ++i) {
        Vec6 xi;
        for (int k = 0; k < 6; ++k) xi[k] = u(rng) * (k < 3 ? 1.0 : 0.4);
        truth.push_back(se3_exp(xi));
        if (i == 0)
            g.add_node(0, truth[0]);
        else
            g.add_keyframe_edges(i, truth[i], 0.0);
    }
    auto report = g.optimize();
    CHECK(report.final_chi2 < 1e-10);
    for (int i = 0; i < 5; ++i) {
        CHECK((g.node_pose(i).rotation - truth[i].rotation).norm() < 1e-6);
        CHECK((g.node_pose(i).translation - truth[i].translation).norm() < 1e-6);
    }
}

TEST_CASE("optimize pulls a perturbed loop back to the measurements") {
    // square loop with a closing edge; measurements are exact, one node is off
    std::vector<RigidPose> truth{pose_xyz(0, 0, 0), pose_xyz(1, 0, 0), pose_xyz(1, 1, 0),
                                 pose_xyz(0, 1, 0)};
    PoseGraph g;
    for (int i = 0; i < 4; ++i) g.add_node(i, truth[i]);
    Mat6 info = Mat6::Identity() * 1e4;
    for (int i = 0; i < 4; ++i) {
        int j = (i + 1) % 4;
        g.add_edge(i, j, truth[j].compose(truth[i].inverse()), info);
    }

    Vec6 bump = (Vec6() << 0.2, -0.15, 0.1, 0.05, 0.1, -0.05).finished();
    g.set_node_pose(2, se3_exp(bump).compose(truth[2]));
    double before = g.chi2();
    CHECK(before > 1.0);

    auto report = g.optimize(100);
    CHECK(report.initial_chi2 == doctest::Approx(before));
    CHECK(report.final_chi2 < 1e-8);
    for (int i = 0; i < 4; ++i) {
        CHECK((g.node_pose(i).rotation - truth[i].rotation).norm() < 1e-4);
        CHECK((g.node_pose(i).translation - truth[i].translation).norm() < 1e-4);
    }
    // anchor never moves
    CHECK((g.node_pose(0).translation - truth[0].translation).norm() == 0.0);
    CHECK((g.node_pose(0).rotation - truth[0].rotation).norm() == 0.0);
}

TEST_CASE("optimize distributes an inconsistent loop closure") {
    // chain 0-1-2-3 with a deliberately wrong closing edge 3->0; the optimum
    // spreads the discrepancy, strictly lowering chi2
    std::vector<RigidPose> truth{pose_xyz(0, 0, 0), pose_xyz(1, 0, 0), pose_xyz(2, 0, 0),
                                 pose_xyz(3, 0, 0)};
    PoseGraph g;
    for (int i = 0; i < 4; ++i) g.add_node(i, truth[i]);
    Mat6 info = Mat6::Identity() * 1e4;
    for (int i = 0; i < 3; ++i)
        g.add_edge(i, i + 1, truth[i + 1].compose(truth[i].inverse()), info);
    RigidPose closing = truth[0].compose(truth[3].inverse());
    closing.translation.x() += 0.1;  // 10 cm of accumulated drift
    g.add_edge(3, 0, closing, info);

    double before = g.chi2();
    auto report = g.optimize(100);
    CHECK(report.final_chi2 < before);
    CHECK(report.final_chi2 > 0);  // the residual cannot vanish
    // nodes moved to share the error
    CHECK(g.node_pose(1).translation.x() != doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dump writes a g2o-style file") {
    namespace fs = std::filesystem;
    PoseGraph g;
    g.add_node(0, RigidPose::identity());
    g.add_keyframe_edges(1, pose_xyz(0.5, 0, 0), 0.0);
    auto path = (fs::temp_directory_path() / "cnnslam_graph.g2o").string();
    g.dump(path);

    std::ifstream in(path);
    std::string line;
    std::vector<std::string> vertices, edges;
    while (std::getline(in, line)) {
        if (line.rfind("VERTEX_SE3:QUAT", 0) == 0) vertices.push_back(line);
        if (line.rfind("EDGE_SE3:QUAT", 0) == 0) edges.push_back(line);
    }
    CHECK(vertices.size() == 2);
    REQUIRE(edges.size() == 1);

    // vertex 1 is written camera-to-world: translation -0.5
    std::istringstream v(vertices[1]);
    std::string tag;
    int id;
    double tx, ty, tz, qx, qy, qz, qw;
    v >> tag >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
    CHECK(id == 1);
    CHECK(tx == doctest::Approx(-0.5));
    CHECK(qw == doctest::Approx(1.0));

    // edge carries 7 pose numbers and the 21 upper-triangle information entries
    std::istringstream e(edges[0]);
    std::vector<std::string> tokens;
    while (e >> tag) tokens.push_back(tag);
    CHECK(tokens.size() == 1 + 2 + 7 + 21);
    fs::remove(path);
}
