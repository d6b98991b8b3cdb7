// distrace: command-line front end for the edge-node pipeline, metrics and collector.

#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "distrace/bench.hpp"
#include "distrace/detection.hpp"
#include "distrace/distancing.hpp"
#include "distrace/error.hpp"
#include "distrace/events.hpp"
#include "distrace/pipeline.hpp"
#include "distrace/transport.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int)
{
    g_stop.store(true);
}

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv)
{
    using namespace distrace;

    CLI::App app{"Social-distancing edge node: pipeline, metrics, benchmark and collector"};
    app.require_subcommand(1);

    std::string config_path;
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the edge-node pipeline over a manifest");
    pipeline_cmd->add_option("--config", config_path, "Pipeline JSON config")->required();

    std::string mask_path;
    double ref_px = 0.0;
    double ref_m = 0.0;
    double threshold_m = kDefaultThresholdM;
    auto* distance_cmd = app.add_subcommand("distance", "Distance report for one person mask (PGM, nonzero = person)");
    distance_cmd->add_option("--mask", mask_path, "Mask PGM")->required();
    distance_cmd->add_option("--ref-px", ref_px, "Reference width in pixels")->required();
    distance_cmd->add_option("--ref-m", ref_m, "Reference width in metres")->required();
    distance_cmd->add_option("--threshold", threshold_m, "Minimum distance in metres");

    std::string dets_path;
    std::string gts_path;
    double iou_thr = 0.5;
    auto* map_cmd = app.add_subcommand("eval-map", "Per-class AP and mAP of detections");
    map_cmd->add_option("--dets", dets_path, "Detections NDJSON")->required();
    map_cmd->add_option("--gts", gts_path, "Ground truth NDJSON")->required();
    map_cmd->add_option("--iou", iou_thr, "IoU match threshold");

    std::string pred_path;
    std::string gt_path;
    unsigned classes = 0;
    auto* miou_cmd = app.add_subcommand("eval-miou", "Mean IoU of two label maps");
    miou_cmd->add_option("--pred", pred_path, "Predicted label PGM")->required();
    miou_cmd->add_option("--gt", gt_path, "Ground truth label PGM")->required();
    miou_cmd->add_option("--classes", classes, "Number of classes")->required()->check(CLI::PositiveNumber);

    std::string bench_config;
    unsigned synthetic = 0;
    auto* bench_cmd = app.add_subcommand("bench", "Time the geometric stage");
    bench_cmd->add_option("--config", bench_config, "Pipeline JSON config")->required();
    bench_cmd->add_option("--synthetic", synthetic, "Time N synthetic 640x480 masks instead of the manifest");

    std::string bind_address;
    std::string out_path;
    auto* collect_cmd = app.add_subcommand("collect", "Receive NDJSON events over TCP");
    collect_cmd->add_option("--bind", bind_address, "host:port to listen on")->required();
    collect_cmd->add_option("--out", out_path, "Output NDJSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*pipeline_cmd) {
            const auto summary = run_pipeline(PipelineConfig::load(config_path));
            std::cout << summary.to_json().dump() << '\n';
            if (summary.delivery && summary.delivery->unreachable) {
                std::cerr << "collector unreachable; undelivered events remain in the spool\n";
                return kExitRuntime;
            }
        } else if (*distance_cmd) {
            const BinaryMask mask = threshold(load_pgm_file(mask_path), 0);
            const auto report = table2_pipeline(mask, calibrate(ref_px, ref_m), threshold_m, DistancingConfig{},
                                                std::filesystem::path(mask_path).stem().string());
            std::cout << to_json(report).dump() << '\n';
        } else if (*map_cmd) {
            const auto result = evaluate_detections(load_annotations(dets_path), load_annotations(gts_path), iou_thr);
            std::cout << result.to_json().dump() << '\n';
        } else if (*miou_cmd) {
            const auto pred = SegmentationMap::from_image(load_pgm_file(pred_path));
            const auto gt = SegmentationMap::from_image(load_pgm_file(gt_path));
            std::cout << nlohmann::json(miou(pred, gt, classes)).dump() << '\n';
        } else if (*bench_cmd) {
            const auto config = PipelineConfig::load(bench_config);
            TimingReport report;
            if (synthetic > 0) {
                std::vector<BinaryMask> masks;
                for (unsigned i = 0; i < synthetic; ++i) {
                    masks.push_back(synthetic_scene(640, 480, 8, i));
                }
                report = measure_masks(masks, config.calibration(), config.threshold_m, config.distancing,
                                       config.bench_repetitions);
            } else {
                report = measure_pipeline(config, config.bench_repetitions);
            }
            std::cout << report.to_json().dump() << '\n';
        } else if (*collect_cmd) {
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            serve_collector(bind_address, out_path, g_stop);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
