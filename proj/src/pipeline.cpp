#include "distrace/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "distrace/detection.hpp"
#include "distrace/error.hpp"
#include "distrace/events.hpp"

namespace distrace {

namespace {

[[noreturn]] void invalid(const std::string& what)
{
    throw Error(ErrorCode::ConfigInvalid, what);
}

void only_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys)
{
    if (!j.is_object()) {
        invalid(where + " must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            invalid("unknown key '" + key + "' in " + where);
        }
    }
}

const nlohmann::json& required(const nlohmann::json& j, const std::string& where, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        invalid("missing key '" + std::string(key) + "' in " + where);
    }
    return *it;
}

double number(const nlohmann::json& v, const std::string& name)
{
    if (!v.is_number()) {
        invalid(name + " must be a number");
    }
    return v.get<double>();
}

std::uint64_t count(const nlohmann::json& v, const std::string& name)
{
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        invalid(name + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::filesystem::path path_value(const nlohmann::json& v, const std::string& name, const std::filesystem::path& base)
{
    if (!v.is_string() || v.get<std::string>().empty()) {
        invalid(name + " must be a non-empty string");
    }
    std::filesystem::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
}

std::string read_file(const std::filesystem::path& path, ErrorCode missing)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(missing, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

class EventStream {
public:
    EventStream(const SinkConfig& sink) : file_(sink.ndjson_path, NdjsonSink::Mode::Truncate)
    {
        if (sink.tcp) {
            sender_.emplace(sink.tcp->endpoint, sink.tcp->retry, sink.tcp->spool_path);
        }
    }

    void emit(Event e, const FrameEntry& frame)
    {
        e.seq = seq_++;
        e.timestamp_ms = frame.timestamp_ms;
        const std::string line = serialize_event(e);
        file_.append_line(line);
        if (sender_) {
            sender_->send(line);
        }
    }

    std::size_t count() const noexcept { return seq_; }

    std::optional<DeliveryReport> finish()
    {
        if (!sender_) {
            return std::nullopt;
        }
        return sender_->finish();
    }

private:
    NdjsonSink file_;
    std::optional<TcpSender> sender_;
    std::uint64_t seq_ = 0;
};

ErrorInfo error_info(const std::string& stage, const std::exception& ex)
{
    if (const auto* e = dynamic_cast<const Error*>(&ex)) {
        return {stage, std::string(to_string(e->code())), e->what()};
    }
    return {stage, "Exception", ex.what()};
}

}  // namespace

FrameManifest load_manifest(const std::filesystem::path& path)
{
    const std::string text = read_file(path, ErrorCode::ManifestMissing);
    const auto base = path.parent_path();
    FrameManifest manifest;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const std::string where = "manifest line " + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            invalid(where + ": " + e.what());
        }
        only_keys(j, where, {"frame_id", "image_path", "timestamp_ms"});
        const auto& id = required(j, where, "frame_id");
        if (!id.is_string() || id.get<std::string>().empty()) {
            invalid(where + ": frame_id must be a non-empty string");
        }
        FrameEntry entry;
        entry.frame_id = id.get<std::string>();
        entry.image_path = path_value(required(j, where, "image_path"), where + " image_path", base);
        if (j.contains("timestamp_ms")) {
            if (!j["timestamp_ms"].is_number_integer()) {
                invalid(where + ": timestamp_ms must be an integer");
            }
            entry.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
        }
        if (!seen.insert(entry.frame_id).second) {
            invalid(where + ": duplicate frame_id '" + entry.frame_id + "'");
        }
        manifest.push_back(std::move(entry));
    }
    return manifest;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    only_keys(j, "config",
              {"manifest", "annotations", "labelmaps", "calibration", "threshold_m", "canny", "morphology",
               "min_area", "sink", "bench"});
    PipelineConfig c;
    c.manifest = path_value(required(j, "config", "manifest"), "manifest", base_dir);
    c.annotations = path_value(required(j, "config", "annotations"), "annotations", base_dir);
    c.labelmaps = path_value(required(j, "config", "labelmaps"), "labelmaps", base_dir);

    const auto& cal = required(j, "config", "calibration");
    only_keys(cal, "calibration", {"reference_width_px", "reference_width_m"});
    c.reference_width_px = number(required(cal, "calibration", "reference_width_px"), "reference_width_px");
    c.reference_width_m = number(required(cal, "calibration", "reference_width_m"), "reference_width_m");
    try {
        (void)c.calibration();
    } catch (const Error& e) {
        invalid(e.what());
    }

    if (j.contains("threshold_m")) {
        c.threshold_m = number(j["threshold_m"], "threshold_m");
    }
    if (!(c.threshold_m > 0.0)) {
        invalid("threshold_m must be positive");
    }

    if (j.contains("canny")) {
        const auto& cn = j["canny"];
        only_keys(cn, "canny", {"low", "high", "sigma"});
        if (cn.contains("low")) c.distancing.canny.low = number(cn["low"], "canny.low");
        if (cn.contains("high")) c.distancing.canny.high = number(cn["high"], "canny.high");
        if (cn.contains("sigma")) c.distancing.canny.sigma = number(cn["sigma"], "canny.sigma");
    }
    const auto& cp = c.distancing.canny;
    if (!(cp.low >= 0.0) || !(cp.low < cp.high) || !(cp.sigma > 0.0)) {
        invalid("canny needs 0 <= low < high and sigma > 0");
    }

    if (j.contains("morphology")) {
        const auto& m = j["morphology"];
        only_keys(m, "morphology", {"se_size", "iterations"});
        if (m.contains("se_size")) c.distancing.se_size = std::uint32_t(count(m["se_size"], "morphology.se_size"));
        if (m.contains("iterations")) c.distancing.iterations = unsigned(count(m["iterations"], "morphology.iterations"));
    }
    if (c.distancing.se_size % 2 == 0 || c.distancing.iterations == 0) {
        invalid("morphology needs an odd se_size and at least one iteration");
    }

    if (j.contains("min_area")) {
        c.distancing.min_area = number(j["min_area"], "min_area");
    }
    if (!(c.distancing.min_area >= 0.0)) {
        invalid("min_area must be non-negative");
    }

    const auto& sink = required(j, "config", "sink");
    only_keys(sink, "sink", {"ndjson_path", "tcp"});
    c.sink.ndjson_path = path_value(required(sink, "sink", "ndjson_path"), "sink.ndjson_path", base_dir);
    if (sink.contains("tcp") && !sink["tcp"].is_null()) {
        const auto& t = sink["tcp"];
        only_keys(t, "sink.tcp", {"host", "port", "retry_max", "backoff_ms", "spool_path"});
        TcpSinkConfig tcp;
        const auto& host = required(t, "sink.tcp", "host");
        if (!host.is_string() || host.get<std::string>().empty()) {
            invalid("sink.tcp.host must be a non-empty string");
        }
        tcp.endpoint.host = host.get<std::string>();
        const auto port = count(required(t, "sink.tcp", "port"), "sink.tcp.port");
        if (port == 0 || port > 65535) {
            invalid("sink.tcp.port must be in 1..65535");
        }
        tcp.endpoint.port = std::uint16_t(port);
        if (t.contains("retry_max")) tcp.retry.retry_max = unsigned(count(t["retry_max"], "sink.tcp.retry_max"));
        if (t.contains("backoff_ms")) {
            tcp.retry.backoff = std::chrono::milliseconds(count(t["backoff_ms"], "sink.tcp.backoff_ms"));
        }
        if (tcp.retry.retry_max == 0) {
            invalid("sink.tcp.retry_max must be at least 1");
        }
        if (t.contains("spool_path")) {
            tcp.spool_path = path_value(t["spool_path"], "sink.tcp.spool_path", base_dir);
        } else {
            tcp.spool_path = c.sink.ndjson_path;
            tcp.spool_path += ".spool";
        }
        c.sink.tcp = std::move(tcp);
    }

    if (j.contains("bench")) {
        const auto& b = j["bench"];
        only_keys(b, "bench", {"repetitions"});
        if (b.contains("repetitions")) c.bench_repetitions = unsigned(count(b["repetitions"], "bench.repetitions"));
        if (c.bench_repetitions == 0) {
            invalid("bench.repetitions must be at least 1");
        }
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path)
{
    const std::string text = read_file(path, ErrorCode::ConfigInvalid);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        invalid(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

nlohmann::json PipelineSummary::to_json() const
{
    nlohmann::json j = {{"frames", frames}, {"events", events}, {"violations", violations}, {"errors", errors}};
    if (delivery) {
        j["delivery"] = {{"sent", delivery->sent},
                         {"respooled", delivery->respooled},
                         {"spooled", delivery->spooled},
                         {"unreachable", delivery->unreachable}};
    }
    return j;
}

PipelineSummary run_pipeline(const PipelineConfig& config)
{
    const FrameManifest manifest = load_manifest(config.manifest);
    std::unique_ptr<DetectorBackend> detector;
    std::unique_ptr<SegmenterBackend> segmenter;
    try {
        detector = stub_detector_from_annotations(config.annotations);
        segmenter = stub_segmenter_from_labelmaps(config.labelmaps);
    } catch (const Error& e) {
        invalid(e.what());
    }
    const CalibrationProfile profile = config.calibration();

    PipelineSummary summary;
    EventStream stream(config.sink);
    for (const auto& frame : manifest) {
        ++summary.frames;
        auto fail = [&](const std::string& stage, const std::exception& ex) {
            stream.emit(make_error_event(frame.frame_id, error_info(stage, ex)), frame);
            ++summary.errors;
        };

        std::optional<GrayImage> image;
        try {
            image = load_pgm_file(frame.image_path.string());
        } catch (const std::exception& ex) {
            fail("load", ex);
            continue;
        }

        try {
            stream.emit(make_mask_event(frame.frame_id, detector->detect(frame.frame_id, *image)), frame);
        } catch (const std::exception& ex) {
            fail("detect", ex);
        }

        try {
            const SegmentationMap seg = segmenter->segment(frame.frame_id, *image);
            ComplianceReport report = table2_pipeline(seg.class_mask(kPersonLabel), profile, config.threshold_m,
                                                      config.distancing, frame.frame_id);
            summary.violations += report.violations;
            stream.emit(make_distance_event(std::move(report)), frame);
        } catch (const std::exception& ex) {
            fail("segment", ex);
        }
    }
    summary.delivery = stream.finish();
    summary.events = stream.count();
    return summary;
}

}  // namespace distrace
