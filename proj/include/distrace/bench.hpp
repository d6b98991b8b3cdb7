#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distrace/distancing.hpp"
#include "distrace/pipeline.hpp"

namespace distrace {

struct TimingReport {
    std::size_t frames = 0;
    double wall_ms = 0.0;
    double fps = 0.0;
    double latency_p50 = 0.0;  // ms per frame
    double latency_p95 = 0.0;
    double latency_p99 = 0.0;

    nlohmann::json to_json() const;
};

/// Nearest-rank percentile (p in (0, 100]) of already sorted samples.
double nearest_rank(std::span<const double> sorted, double p);

TimingReport summarize_latencies(std::vector<double> latencies_ms, double wall_ms);

/// Times the geometric stage (Canny through classification) on prepared masks.
/// One untimed warm-up pass precedes `repetitions` timed passes.
TimingReport measure_masks(std::span<const BinaryMask> masks, const CalibrationProfile& profile, double threshold_m,
                           const DistancingConfig& config, unsigned repetitions);

/// Loads frames and person masks through the stub backends (untimed), then
/// calls measure_masks. Throws ConfigInvalid for repetitions == 0 or an
/// unusable manifest.
TimingReport measure_pipeline(const PipelineConfig& config, unsigned repetitions);

/// Filled axis-aligned rectangles of assorted sizes scattered over a
/// `width` x `height` mask, deterministic in `seed`.
BinaryMask synthetic_scene(std::uint32_t width, std::uint32_t height, unsigned people, std::uint64_t seed);

struct FixtureRecord {
    std::string model;
    std::optional<double> train_iter_s;
    std::optional<double> inf_fps;
    std::optional<double> mem_gb;
    std::optional<double> ap_box;
    std::optional<double> ap_mask;
    std::optional<double> map_pct;
    std::optional<double> miou;
    std::optional<double> params_m;
    std::optional<bool> realtime;
    std::optional<bool> multi_scale;
    std::optional<bool> flip;
    std::optional<bool> distillation;

    bool operator==(const FixtureRecord&) const = default;
};

/// Numeric metric columns accepted by rank_fixtures.
std::optional<double> fixture_metric(const FixtureRecord& record, const std::string& metric);

/// CSV with a header of FixtureRecord field names (any subset, any order,
/// `model` required). "-" or an empty cell means absent.
std::vector<FixtureRecord> parse_fixtures(const std::string& csv);
std::vector<FixtureRecord> load_fixtures(const std::filesystem::path& path);
std::string serialize_fixtures(std::span<const FixtureRecord> records);

/// Descending by `metric`, records without it dropped, ties keep input order.
std::vector<FixtureRecord> rank_fixtures(std::span<const FixtureRecord> records, const std::string& metric);

}  // namespace distrace
