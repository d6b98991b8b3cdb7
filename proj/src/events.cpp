#include "distrace/events.hpp"

#include "distrace/error.hpp"

namespace distrace {

namespace {

nlohmann::json pair_to_json(const DistancePair& p)
{
    return {{"id_a", p.id_a},
            {"id_b", p.id_b},
            {"px_distance", p.px_distance},
            {"metric_distance", p.metric_distance},
            {"kind", to_string(p.kind)},
            {"label", to_string(p.label)}};
}

DistancePair pair_from_json(const nlohmann::json& j)
{
    DistancePair p;
    p.id_a = j.at("id_a").get<std::size_t>();
    p.id_b = j.at("id_b").get<std::size_t>();
    p.px_distance = j.at("px_distance").get<double>();
    p.metric_distance = j.at("metric_distance").get<double>();
    p.kind = pair_kind_from_string(j.at("kind").get<std::string>());
    p.label = pair_label_from_string(j.at("label").get<std::string>());
    return p;
}

nlohmann::json pairs_to_json(const std::vector<DistancePair>& pairs)
{
    auto arr = nlohmann::json::array();
    for (const auto& p : pairs) {
        arr.push_back(pair_to_json(p));
    }
    return arr;
}

std::vector<DistancePair> pairs_from_json(const nlohmann::json& j)
{
    std::vector<DistancePair> out;
    for (const auto& p : j) {
        out.push_back(pair_from_json(p));
    }
    return out;
}

}  // namespace

std::string to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::MaskEvent: return "mask_event";
    case EventKind::DistanceEvent: return "distance_event";
    case EventKind::ErrorEvent: return "error_event";
    }
    return "error_event";
}

EventKind event_kind_from_string(const std::string& s)
{
    if (s == "mask_event") {
        return EventKind::MaskEvent;
    }
    if (s == "distance_event") {
        return EventKind::DistanceEvent;
    }
    if (s == "error_event") {
        return EventKind::ErrorEvent;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown event kind '" + s + "'");
}

Event make_mask_event(std::string frame_id, std::vector<DetBox> boxes)
{
    Event e;
    e.kind = EventKind::MaskEvent;
    e.frame_id = std::move(frame_id);
    e.payload = std::move(boxes);
    return e;
}

Event make_distance_event(ComplianceReport report)
{
    Event e;
    e.kind = EventKind::DistanceEvent;
    e.frame_id = report.frame_id;
    e.payload = std::move(report);
    return e;
}

Event make_error_event(std::string frame_id, ErrorInfo error)
{
    Event e;
    e.kind = EventKind::ErrorEvent;
    e.frame_id = std::move(frame_id);
    e.payload = std::move(error);
    return e;
}

nlohmann::json to_json(const ComplianceReport& report)
{
    return {{"frame_id", report.frame_id},
            {"object_count", report.object_count},
            {"pairs", pairs_to_json(report.pairs)},
            {"chain", pairs_to_json(report.chain)},
            {"threshold_m", report.threshold_m},
            {"violations", report.violations},
            {"score", report.score}};
}

ComplianceReport compliance_report_from_json(const nlohmann::json& j)
{
    ComplianceReport r;
    r.frame_id = j.at("frame_id").get<std::string>();
    r.object_count = j.at("object_count").get<std::size_t>();
    r.pairs = pairs_from_json(j.at("pairs"));
    r.chain = pairs_from_json(j.at("chain"));
    r.threshold_m = j.at("threshold_m").get<double>();
    r.violations = j.at("violations").get<std::size_t>();
    r.score = j.at("score").get<double>();
    return r;
}

nlohmann::json to_json(const Event& event)
{
    nlohmann::json j;
    j["kind"] = to_string(event.kind);
    j["frame_id"] = event.frame_id;
    j["seq"] = event.seq;
    if (event.timestamp_ms) {
        j["timestamp_ms"] = *event.timestamp_ms;
    }
    if (const auto* boxes = std::get_if<std::vector<DetBox>>(&event.payload)) {
        auto arr = nlohmann::json::array();
        for (const auto& b : *boxes) {
            arr.push_back({{"box", {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}},
                           {"class", std::string(to_string(b.cls))},
                           {"score", b.score},
                           {"compliant", b.cls != ObjectClass::WithoutMask}});
        }
        j["payload"] = std::move(arr);
    } else if (const auto* report = std::get_if<ComplianceReport>(&event.payload)) {
        j["payload"] = to_json(*report);
    } else {
        const auto& err = std::get<ErrorInfo>(event.payload);
        j["payload"] = {{"stage", err.stage}, {"code", err.code}, {"message", err.message}};
    }
    return j;
}

Event event_from_json(const nlohmann::json& j)
{
    try {
        Event e;
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.frame_id = j.at("frame_id").get<std::string>();
        e.seq = j.at("seq").get<std::uint64_t>();
        if (j.contains("timestamp_ms")) {
            e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        }
        const auto& payload = j.at("payload");
        switch (e.kind) {
        case EventKind::MaskEvent: {
            std::vector<DetBox> boxes;
            for (const auto& item : payload) {
                DetBox b;
                const auto& box = item.at("box");
                b.x = box.at("x").get<double>();
                b.y = box.at("y").get<double>();
                b.w = box.at("w").get<double>();
                b.h = box.at("h").get<double>();
                b.score = item.at("score").get<double>();
                b.cls = object_class_from_string(item.at("class").get<std::string>());
                boxes.push_back(b);
            }
            e.payload = std::move(boxes);
            break;
        }
        case EventKind::DistanceEvent:
            e.payload = compliance_report_from_json(payload);
            break;
        case EventKind::ErrorEvent:
            e.payload = ErrorInfo{payload.at("stage").get<std::string>(), payload.at("code").get<std::string>(),
                                  payload.at("message").get<std::string>()};
            break;
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed event: ") + ex.what());
    }
}

std::string serialize_event(const Event& event)
{
    return to_json(event).dump();
}

Event parse_event(const std::string& line)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed event line: ") + ex.what());
    }
    return event_from_json(j);
}

NdjsonSink::NdjsonSink(const std::filesystem::path& path, Mode mode)
    : path_(path), out_(path, std::ios::binary | (mode == Mode::Truncate ? std::ios::trunc : std::ios::app))
{
    if (!out_) {
        throw Error(ErrorCode::IoFailure, "cannot open sink " + path.string());
    }
}

void NdjsonSink::append(const Event& event)
{
    append_line(serialize_event(event));
}

void NdjsonSink::append_line(const std::string& line)
{
    out_ << line << '\n';
    out_.flush();
    if (!out_) {
        throw Error(ErrorCode::IoFailure, "write to " + path_.string() + " failed");
    }
}

void emit_ndjson(const Event& event, const std::filesystem::path& sink_path)
{
    NdjsonSink(sink_path, NdjsonSink::Mode::Append).append(event);
}

}  // namespace distrace
