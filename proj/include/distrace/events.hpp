#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "distrace/detection.hpp"
#include "distrace/distancing.hpp"

namespace distrace {

enum class EventKind { MaskEvent, DistanceEvent, ErrorEvent };

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

/// A frame-level failure recorded in place of the event it prevented.
struct ErrorInfo {
    std::string stage;  // load | detect | segment
    std::string code;
    std::string message;

    bool operator==(const ErrorInfo&) const = default;
};

struct Event {
    EventKind kind = EventKind::MaskEvent;
    std::string frame_id;
    std::uint64_t seq = 0;
    std::optional<std::int64_t> timestamp_ms;
    std::variant<std::vector<DetBox>, ComplianceReport, ErrorInfo> payload;

    bool operator==(const Event&) const = default;
};

Event make_mask_event(std::string frame_id, std::vector<DetBox> boxes);
Event make_distance_event(ComplianceReport report);
Event make_error_event(std::string frame_id, ErrorInfo error);

nlohmann::json to_json(const ComplianceReport& report);
ComplianceReport compliance_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Event& event);
Event event_from_json(const nlohmann::json& j);

/// Compact JSON with sorted keys and no trailing newline.
std::string serialize_event(const Event& event);
Event parse_event(const std::string& line);

/// Append-only NDJSON file, one event per line, flushed per line.
class NdjsonSink {
public:
    enum class Mode { Truncate, Append };

    NdjsonSink(const std::filesystem::path& path, Mode mode);

    void append(const Event& event);
    void append_line(const std::string& line);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

void emit_ndjson(const Event& event, const std::filesystem::path& sink_path);

}  // namespace distrace
