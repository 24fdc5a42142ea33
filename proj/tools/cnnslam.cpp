#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cnnslam/cnnslam.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Dense monocular SLAM with externally predicted depth maps"};
    app.require_subcommand(1);

    std::string config_path, run_dir, gt_dir, align = "rigid", mode = "rgb";
    double divisor = 5000.0;

    auto* run_cmd = app.add_subcommand("run", "Process a sequence end to end");
    run_cmd->add_option("--config", config_path, "key=value config file")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Compute ATE and depth accuracy for a run");
    eval_cmd->add_option("--run", run_dir, "run output directory")->required();
    eval_cmd->add_option("--gt", gt_dir, "dataset root with ground truth")->required();
    eval_cmd->add_option("--align", align, "trajectory alignment: none|rigid")
        ->check(CLI::IsMember({"none", "rigid"}));
    eval_cmd->add_option("--divisor", divisor, "depth PNG divisor");

    auto* export_cmd = app.add_subcommand("export", "Export the global model as PLY");
    export_cmd->add_option("--run", run_dir, "run output directory")->required();
    export_cmd->add_option("--mode", mode, "coloring: rgb|label")
        ->check(CLI::IsMember({"rgb", "label"}));

    auto* print_cmd = app.add_subcommand("print-config", "Print all config keys with defaults");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            auto cfg = cnnslam::PipelineConfig::from_file(config_path);
            cnnslam::Pipeline pipeline(cfg);
            auto art = pipeline.run();
            std::cout << "processed " << art.frame_count << " frames, " << art.keyframe_count
                      << " key-frames\n"
                      << "artifacts in " << art.output_dir << "\n";
        } else if (eval_cmd->parsed()) {
            auto alignment =
                align == "none" ? cnnslam::Alignment::None : cnnslam::Alignment::Rigid;
            auto rep = cnnslam::evaluate_run(run_dir, gt_dir, alignment, divisor);
            auto path = (std::filesystem::path(run_dir) / "metrics.txt").string();
            cnnslam::write_metrics_report(rep, path);
            if (rep.ate) std::cout << "ATE RMSE [m]: " << *rep.ate << "\n";
            if (rep.depth)
                std::cout << "correct depth [%]: " << rep.depth->percent_correct << "\n";
            std::cout << "report written to " << path << "\n";
        } else if (export_cmd->parsed()) {
            auto model = cnnslam::GlobalModel::load(
                (std::filesystem::path(run_dir) / "model.bin").string());
            auto path = (std::filesystem::path(run_dir) / ("model_" + mode + ".ply")).string();
            model.export_ply(path, mode);
            std::cout << "wrote " << path << " (" << model.elements().size() << " elements)\n";
        } else if (print_cmd->parsed()) {
            cnnslam::PipelineConfig{}.print(std::cout);
        }
    } catch (const cnnslam::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
