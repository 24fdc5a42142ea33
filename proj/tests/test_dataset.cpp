#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cnnslam/dataset.hpp"
#include "support/synthetic.hpp"

using namespace cnnslam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("load_sequence sorts records and parses both line formats") {
    TempDir dir("cnnslam_seq");
    {
        std::ofstream a(dir.path / "assoc.txt");
        a << "# comment\n";
        a << "3.0 rgb/c.png\n";
        a << "1.0 rgb/a.png 1.0 depth/a.png\n";
        a << "2.0 rgb/b.png\n";
    }
    auto records = load_sequence(dir.path.string(), (dir.path / "assoc.txt").string());
    REQUIRE(records.size() == 3);
    CHECK(records[0].timestamp == doctest::Approx(1.0));
    CHECK(records[1].timestamp == doctest::Approx(2.0));
    CHECK(records[2].timestamp == doctest::Approx(3.0));
    CHECK(records[0].gt_depth_path.has_value());
    CHECK_FALSE(records[1].gt_depth_path.has_value());
    CHECK_FALSE(records[0].gt_pose.has_value());
}

TEST_CASE("load_sequence rejects malformed lines with the line number") {
    TempDir dir("cnnslam_seq_bad");
    {
        std::ofstream a(dir.path / "assoc.txt");
        a << "1.0 rgb/a.png\n";
        a << "2.0 rgb/b.png extra\n";
    }
    try {
        load_sequence(dir.path.string(), (dir.path / "assoc.txt").string());
        FAIL("expected MalformedLine");
    } catch (const MalformedLine& e) {
        CHECK(e.line_number == 2);
    }
    CHECK_THROWS_AS(load_sequence(dir.path.string(), (dir.path / "missing.txt").string()),
                    MissingFile);
}

TEST_CASE("trajectory writing round-trips and handles the empty list") {
    TempDir dir("cnnslam_traj");
    auto path = (dir.path / "traj.txt").string();

    write_trajectory({}, path);
    CHECK(fs::file_size(path) == 0);

    std::vector<std::pair<double, RigidPose>> poses;
    poses.emplace_back(1.5, RigidPose::identity());
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 5; ++i) {
        Vec6 xi;
        for (int j = 0; j < 6; ++j) xi[j] = u(rng);
        poses.emplace_back(2.0 + i, se3_exp(xi));
    }
    write_trajectory(poses, path);

    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first == "1.500000 0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 1.000000");

    auto back = read_trajectory(path);
    REQUIRE(back.size() == poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
        CHECK((back[i].second.translation - poses[i].second.translation).norm() < 1e-5);
        CHECK((back[i].second.rotation - poses[i].second.rotation).norm() < 1e-5);
    }
}

TEST_CASE("to_intensity: luminance formula and working resolution") {
    cv::Mat white(480, 640, CV_8UC3, cv::Scalar(255, 255, 255));
    auto img = to_intensity(white);
    CHECK(img.width() == 320);
    CHECK(img.height() == 240);
    CHECK(img.at(10, 10) == doctest::Approx(1.0).epsilon(1e-5));

    cv::Mat red(8, 8, CV_8UC3, cv::Scalar(0, 0, 255));  // BGR
    auto r = to_intensity(red, 8, 8);
    CHECK(r.at(3, 3) == doctest::Approx(0.299).epsilon(1e-4));

    cv::Mat bad(8, 8, CV_32FC3);
    CHECK_THROWS_AS(to_intensity(bad, 8, 8), UnsupportedFormat);
}

TEST_CASE("depth PNG io honors the divisor and invalid-zero convention") {
    TempDir dir("cnnslam_depth");
    DepthMap d(4, 3, 0.f);
    d.at(0, 0) = 1.0f;   // raw 5000 at divisor 5000
    d.at(1, 0) = 1.5f;
    d.at(2, 2) = 0.f;    // invalid stays raw 0
    auto path = (dir.path / "d.png").string();
    save_depth_png(d, path, 5000.0);
    auto back = load_depth_png(path, 5000.0);
    CHECK(back.at(0, 0) == doctest::Approx(1.0));
    CHECK(back.at(1, 0) == doctest::Approx(1.5));
    CHECK(back.at(2, 2) == 0.f);

    auto back1000 = load_depth_png(path, 1000.0);
    CHECK(back1000.at(0, 0) == doctest::Approx(5.0));

    CHECK_THROWS_AS(load_depth_png((dir.path / "absent.png").string()), MissingFile);
}

TEST_CASE("f32 depth io is lossless") {
    TempDir dir("cnnslam_f32");
    DepthMap d(5, 4);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> u(0.1f, 9.f);
    for (auto& v : d.values()) v = u(rng);
    auto path = (dir.path / "d.f32").string();
    save_depth_f32(d, path);
    auto back = load_depth_f32(path);
    REQUIRE(back.size() == d.size());
    for (size_t i = 0; i < d.size(); ++i) CHECK(back.values()[i] == d.values()[i]);
}

TEST_CASE("camera config parsing") {
    TempDir dir("cnnslam_cam");
    {
        std::ofstream c(dir.path / "camera.txt");
        c << "# intrinsics\nfx = 525\nfy= 520\ncx =319.5\ncy=239.5\nwidth=640\nheight=480\n"
             "f_train = 580\n";
    }
    auto cfg = load_camera_config((dir.path / "camera.txt").string());
    CHECK(cfg.intrinsics.fx == doctest::Approx(525));
    CHECK(cfg.intrinsics.fy == doctest::Approx(520));
    CHECK(cfg.intrinsics.width == 640);
    REQUIRE(cfg.f_train.has_value());
    CHECK(*cfg.f_train == doctest::Approx(580));

    auto scaled = cfg.intrinsics.scaled(320, 240);
    CHECK(scaled.fx == doctest::Approx(262.5));
    CHECK(scaled.cx == doctest::Approx(159.75));
}
