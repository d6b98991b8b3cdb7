#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distrace/distancing.hpp"
#include "distrace/transport.hpp"

namespace distrace {

struct FrameEntry {
    std::string frame_id;
    std::filesystem::path image_path;
    std::optional<std::int64_t> timestamp_ms;
};

/// NDJSON, one {"frame_id", "image_path", "timestamp_ms"?} per line. Relative
/// image paths resolve against the manifest's directory.
using FrameManifest = std::vector<FrameEntry>;
FrameManifest load_manifest(const std::filesystem::path& path);

struct TcpSinkConfig {
    Endpoint endpoint;
    RetryPolicy retry;
    std::filesystem::path spool_path;  // defaults to <ndjson_path>.spool
};

struct SinkConfig {
    std::filesystem::path ndjson_path;
    std::optional<TcpSinkConfig> tcp;
};

struct PipelineConfig {
    std::filesystem::path manifest;
    std::filesystem::path annotations;
    std::filesystem::path labelmaps;
    double reference_width_px = 0.0;
    double reference_width_m = 0.0;
    double threshold_m = kDefaultThresholdM;
    DistancingConfig distancing;
    SinkConfig sink;
    unsigned bench_repetitions = 1;

    CalibrationProfile calibration() const { return calibrate(reference_width_px, reference_width_m); }

    /// Strict: unknown keys and out-of-range values raise ConfigInvalid.
    /// Relative paths resolve against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
};

struct PipelineSummary {
    std::size_t frames = 0;
    std::size_t events = 0;
    std::size_t violations = 0;
    std::size_t errors = 0;
    std::optional<DeliveryReport> delivery;

    nlohmann::json to_json() const;
};

/// Frames in manifest order: detect -> mask_event, segment -> person mask ->
/// distance_event. Per-frame failures become error_events. The NDJSON sink is
/// rewritten from scratch on every run.
PipelineSummary run_pipeline(const PipelineConfig& config);

}  // namespace distrace
