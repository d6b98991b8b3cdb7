#include "distrace/bench.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "distrace/detection.hpp"
#include "distrace/error.hpp"

namespace distrace {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point from, Clock::time_point to)
{
    return std::chrono::duration<double, std::milli>(to - from).count();
}

using NumberField = std::optional<double> FixtureRecord::*;
using FlagField = std::optional<bool> FixtureRecord::*;

constexpr std::array<std::pair<const char*, NumberField>, 8> kNumberFields{{
    {"train_iter_s", &FixtureRecord::train_iter_s},
    {"inf_fps", &FixtureRecord::inf_fps},
    {"mem_gb", &FixtureRecord::mem_gb},
    {"ap_box", &FixtureRecord::ap_box},
    {"ap_mask", &FixtureRecord::ap_mask},
    {"map_pct", &FixtureRecord::map_pct},
    {"miou", &FixtureRecord::miou},
    {"params_m", &FixtureRecord::params_m},
}};

constexpr std::array<std::pair<const char*, FlagField>, 4> kFlagFields{{
    {"realtime", &FixtureRecord::realtime},
    {"multi_scale", &FixtureRecord::multi_scale},
    {"flip", &FixtureRecord::flip},
    {"distillation", &FixtureRecord::distillation},
}};

[[noreturn]] void malformed(std::size_t line, const std::string& what)
{
    throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line, std::size_t line_no)
{
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cells.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cells.back() += c;
            }
        } else if (c == '"' && cells.back().empty()) {
            quoted = true;
        } else if (c == ',') {
            cells.emplace_back();
        } else {
            cells.back() += c;
        }
    }
    if (quoted) {
        malformed(line_no, "unterminated quote");
    }
    return cells;
}

bool absent(const std::string& cell)
{
    return cell.empty() || cell == "-";
}

double parse_number(const std::string& cell, std::size_t line_no)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        malformed(line_no, "not a number: '" + cell + "'");
    }
    return v;
}

bool parse_flag(const std::string& cell, std::size_t line_no)
{
    if (cell == "true") {
        return true;
    }
    if (cell == "false") {
        return false;
    }
    malformed(line_no, "not a boolean: '" + cell + "'");
}

std::string format_number(double v)
{
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string quote_csv(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos && !s.empty() && s != "-") {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + '"';
}

}  // namespace

nlohmann::json TimingReport::to_json() const
{
    return {{"frames", frames},
            {"wall_ms", wall_ms},
            {"fps", fps},
            {"latency_p50", latency_p50},
            {"latency_p95", latency_p95},
            {"latency_p99", latency_p99}};
}

double nearest_rank(std::span<const double> sorted, double p)
{
    if (sorted.empty()) {
        return 0.0;
    }
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * double(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

TimingReport summarize_latencies(std::vector<double> latencies_ms, double wall_ms)
{
    std::sort(latencies_ms.begin(), latencies_ms.end());
    TimingReport r;
    r.frames = latencies_ms.size();
    r.wall_ms = wall_ms;
    r.fps = wall_ms > 0.0 ? double(r.frames) / (wall_ms / 1000.0) : 0.0;
    r.latency_p50 = nearest_rank(latencies_ms, 50);
    r.latency_p95 = nearest_rank(latencies_ms, 95);
    r.latency_p99 = nearest_rank(latencies_ms, 99);
    return r;
}

TimingReport measure_masks(std::span<const BinaryMask> masks, const CalibrationProfile& profile, double threshold_m,
                           const DistancingConfig& config, unsigned repetitions)
{
    if (repetitions == 0) {
        throw Error(ErrorCode::ConfigInvalid, "repetitions must be at least 1");
    }
    std::size_t sink = 0;  // keeps the optimiser from discarding results
    for (const auto& mask : masks) {
        sink += table2_pipeline(mask, profile, threshold_m, config, "warmup").violations;
    }

    std::vector<double> latencies;
    latencies.reserve(masks.size() * repetitions);
    const auto start = Clock::now();
    for (unsigned rep = 0; rep < repetitions; ++rep) {
        for (const auto& mask : masks) {
            const auto t0 = Clock::now();
            sink += table2_pipeline(mask, profile, threshold_m, config, "bench").violations;
            latencies.push_back(elapsed_ms(t0, Clock::now()));
        }
    }
    const double wall = elapsed_ms(start, Clock::now());
    volatile std::size_t keep = sink;
    (void)keep;
    return summarize_latencies(std::move(latencies), wall);
}

TimingReport measure_pipeline(const PipelineConfig& config, unsigned repetitions)
{
    if (repetitions == 0) {
        throw Error(ErrorCode::ConfigInvalid, "repetitions must be at least 1");
    }
    std::vector<BinaryMask> masks;
    try {
        const FrameManifest manifest = load_manifest(config.manifest);
        const auto segmenter = stub_segmenter_from_labelmaps(config.labelmaps);
        for (const auto& frame : manifest) {
            const GrayImage image = load_pgm_file(frame.image_path.string());
            masks.push_back(segmenter->segment(frame.frame_id, image).class_mask(kPersonLabel));
        }
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigInvalid, e.what());
    }
    return measure_masks(masks, config.calibration(), config.threshold_m, config.distancing, repetitions);
}

BinaryMask synthetic_scene(std::uint32_t width, std::uint32_t height, unsigned people, std::uint64_t seed)
{
    BinaryMask mask(width, height);
    std::mt19937_64 rng(seed);
    const std::uint32_t max_w = std::max<std::uint32_t>(4, width / 10);
    const std::uint32_t max_h = std::max<std::uint32_t>(4, height / 4);
    std::uniform_int_distribution<std::uint32_t> bw(3, max_w);
    std::uniform_int_distribution<std::uint32_t> bh(3, max_h);
    for (unsigned i = 0; i < people; ++i) {
        const std::uint32_t w = std::min(bw(rng), width);
        const std::uint32_t h = std::min(bh(rng), height);
        const std::uint32_t x0 = std::uniform_int_distribution<std::uint32_t>(0, width - w)(rng);
        const std::uint32_t y0 = std::uniform_int_distribution<std::uint32_t>(0, height - h)(rng);
        for (std::uint32_t y = y0; y < y0 + h; ++y) {
            for (std::uint32_t x = x0; x < x0 + w; ++x) {
                mask.set(x, y);
            }
        }
    }
    return mask;
}

std::optional<double> fixture_metric(const FixtureRecord& record, const std::string& metric)
{
    for (const auto& [name, field] : kNumberFields) {
        if (metric == name) {
            return record.*field;
        }
    }
    throw Error(ErrorCode::UnknownMetric, "unknown fixture metric '" + metric + "'");
}

std::vector<FixtureRecord> parse_fixtures(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            header = split_csv(line, line_no);
        }
    }
    if (std::find(header.begin(), header.end(), "model") == header.end()) {
        malformed(line_no, "header lacks a 'model' column");
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        const bool known = h == "model" ||
                           std::any_of(kNumberFields.begin(), kNumberFields.end(), [&](auto& f) { return h == f.first; }) ||
                           std::any_of(kFlagFields.begin(), kFlagFields.end(), [&](auto& f) { return h == f.first; });
        if (!known || std::count(header.begin(), header.end(), h) != 1) {
            malformed(line_no, "bad header column '" + h + "'");
        }
    }

    std::vector<FixtureRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv(line, line_no);
        if (cells.size() != header.size()) {
            malformed(line_no, "expected " + std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
        }
        FixtureRecord r;
        bool has_metric = false;
        for (std::size_t i = 0; i < header.size(); ++i) {
            const auto& h = header[i];
            const auto& cell = cells[i];
            if (h == "model") {
                if (cell.empty()) {
                    malformed(line_no, "empty model name");
                }
                r.model = cell;
                continue;
            }
            if (absent(cell)) {
                continue;
            }
            for (const auto& [name, field] : kNumberFields) {
                if (h == name) {
                    r.*field = parse_number(cell, line_no);
                    has_metric = true;
                }
            }
            for (const auto& [name, field] : kFlagFields) {
                if (h == name) {
                    r.*field = parse_flag(cell, line_no);
                }
            }
        }
        if (!has_metric) {
            malformed(line_no, "row has no metric value");
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<FixtureRecord> load_fixtures(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_fixtures(buf.str());
}

std::string serialize_fixtures(std::span<const FixtureRecord> records)
{
    std::ostringstream out;
    out << "model";
    for (const auto& f : kNumberFields) {
        out << ',' << f.first;
    }
    for (const auto& f : kFlagFields) {
        out << ',' << f.first;
    }
    out << '\n';
    for (const auto& r : records) {
        out << quote_csv(r.model);
        for (const auto& [_, field] : kNumberFields) {
            out << ',' << ((r.*field) ? format_number(*(r.*field)) : "-");
        }
        for (const auto& [_, field] : kFlagFields) {
            out << ',' << ((r.*field) ? (*(r.*field) ? "true" : "false") : "-");
        }
        out << '\n';
    }
    return out.str();
}

std::vector<FixtureRecord> rank_fixtures(std::span<const FixtureRecord> records, const std::string& metric)
{
    std::vector<FixtureRecord> eligible;
    for (const auto& r : records) {
        if (fixture_metric(r, metric)) {
            eligible.push_back(r);
        }
    }
    if (records.empty()) {
        (void)fixture_metric(FixtureRecord{}, metric);
    }
    std::stable_sort(eligible.begin(), eligible.end(), [&](const FixtureRecord& a, const FixtureRecord& b) {
        return *fixture_metric(a, metric) > *fixture_metric(b, metric);
    });
    return eligible;
}

}  // namespace distrace
