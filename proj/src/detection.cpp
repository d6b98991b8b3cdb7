#include "distrace/detection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "distrace/error.hpp"

namespace distrace {

namespace {

void check_threshold(double t)
{
    if (!(t >= 0.0 && t <= 1.0)) {
        throw Error(ErrorCode::BadThreshold, "IoU threshold must lie in [0, 1]");
    }
}

double number_field(const nlohmann::json& j, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw Error(ErrorCode::MalformedAnnotation, std::string("box field '") + key + "' missing or not a number");
    }
    return it->get<double>();
}

struct RankedDet {
    std::size_t frame;
    std::size_t order;
    DetBox box;
};

// Shared AP core: detections ranked by score (stable), each greedily matched
// to the unmatched ground truth of its frame with the highest IoU at or above
// the threshold; AP integrates the monotone precision envelope over recall.
double ranked_average_precision(std::vector<RankedDet> dets, const std::vector<std::vector<DetBox>>& gts,
                                double iou_threshold)
{
    check_threshold(iou_threshold);
    std::size_t n_gt = 0;
    for (const auto& g : gts) {
        n_gt += g.size();
    }
    if (n_gt == 0) {
        return dets.empty() ? 1.0 : 0.0;
    }
    if (dets.empty()) {
        return 0.0;
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const RankedDet& a, const RankedDet& b) { return a.box.score > b.box.score; });

    std::vector<std::vector<bool>> matched(gts.size());
    for (std::size_t f = 0; f < gts.size(); ++f) {
        matched[f].assign(gts[f].size(), false);
    }
    std::vector<bool> tp(dets.size(), false);
    std::vector<double> precision(dets.size());
    std::size_t tp_count = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
        const auto& d = dets[k];
        double best = -1.0;
        std::size_t best_idx = 0;
        const auto& frame_gts = gts[d.frame];
        for (std::size_t g = 0; g < frame_gts.size(); ++g) {
            if (matched[d.frame][g]) {
                continue;
            }
            const double v = iou(d.box, frame_gts[g]);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_idx = g;
            }
        }
        if (best >= 0.0) {
            matched[d.frame][best_idx] = true;
            tp[k] = true;
            ++tp_count;
        }
        precision[k] = double(tp_count) / double(k + 1);
    }
    // Envelope: precision at rank k becomes the best precision at any later rank.
    for (std::size_t k = dets.size() - 1; k > 0; --k) {
        precision[k - 1] = std::max(precision[k - 1], precision[k]);
    }
    double ap = 0.0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
        if (tp[k]) {
            ap += precision[k] / double(n_gt);
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

}  // namespace

std::string_view to_string(ObjectClass cls) noexcept
{
    switch (cls) {
    case ObjectClass::Person: return "person";
    case ObjectClass::WithMask: return "with-mask";
    case ObjectClass::WithoutMask: return "without-mask";
    }
    return "person";
}

ObjectClass object_class_from_string(std::string_view name)
{
    for (auto cls : kAllClasses) {
        if (to_string(cls) == name) {
            return cls;
        }
    }
    throw Error(ErrorCode::UnknownClass, "unknown class '" + std::string(name) + "'");
}

void validate(const DetBox& box)
{
    if (!std::isfinite(box.x) || !std::isfinite(box.y) || !(box.w > 0.0) || !(box.h > 0.0) ||
        !std::isfinite(box.w) || !std::isfinite(box.h)) {
        throw Error(ErrorCode::InvalidArgument, "box needs finite origin and positive finite size");
    }
    if (!(box.score >= 0.0 && box.score <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "box score must lie in [0, 1]");
    }
}

nlohmann::json to_json(const DetBox& box)
{
    return {{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}, {"score", box.score},
            {"class", std::string(to_string(box.cls))}};
}

DetBox det_box_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw Error(ErrorCode::MalformedAnnotation, "box must be an object");
    }
    static const std::set<std::string> allowed = {"x", "y", "w", "h", "score", "class"};
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw Error(ErrorCode::MalformedAnnotation, "unexpected box field '" + key + "'");
        }
    }
    DetBox box;
    box.x = number_field(j, "x");
    box.y = number_field(j, "y");
    box.w = number_field(j, "w");
    box.h = number_field(j, "h");
    box.score = j.contains("score") ? number_field(j, "score") : 1.0;
    const auto cls = j.find("class");
    if (cls == j.end() || !cls->is_string()) {
        throw Error(ErrorCode::MalformedAnnotation, "box field 'class' missing or not a string");
    }
    box.cls = object_class_from_string(cls->get<std::string>());
    try {
        validate(box);
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedAnnotation, e.what());
    }
    return box;
}

SegmentationMap::SegmentationMap(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels))
{
    if (labels_.size() != std::size_t(width_) * height_) {
        throw Error(ErrorCode::DimensionMismatch, "label count does not match width*height");
    }
}

SegmentationMap SegmentationMap::from_image(const GrayImage& img)
{
    return SegmentationMap(img.width(), img.height(), std::vector<std::uint8_t>(img.data().begin(), img.data().end()));
}

BinaryMask SegmentationMap::class_mask(std::uint8_t label) const
{
    std::vector<std::uint8_t> bits(labels_.size());
    std::transform(labels_.begin(), labels_.end(), bits.begin(),
                   [label](std::uint8_t v) { return std::uint8_t(v == label ? 1 : 0); });
    return BinaryMask(width_, height_, std::move(bits));
}

FrameBoxes parse_annotations(std::string_view ndjson)
{
    FrameBoxes out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < ndjson.size()) {
        auto end = ndjson.find('\n', pos);
        if (end == std::string_view::npos) {
            end = ndjson.size();
        }
        const std::string_view line = ndjson.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no) + ": ";
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::MalformedAnnotation, where + e.what());
        }
        if (!record.is_object() || !record.contains("frame_id") || !record["frame_id"].is_string() ||
            !record.contains("boxes") || !record["boxes"].is_array() || record.size() != 2) {
            throw Error(ErrorCode::MalformedAnnotation, where + "expected {\"frame_id\": string, \"boxes\": array}");
        }
        const auto frame_id = record["frame_id"].get<std::string>();
        if (out.contains(frame_id)) {
            throw Error(ErrorCode::MalformedAnnotation, where + "duplicate frame_id '" + frame_id + "'");
        }
        std::vector<DetBox> boxes;
        for (const auto& b : record["boxes"]) {
            try {
                boxes.push_back(det_box_from_json(b));
            } catch (const Error& e) {
                throw Error(e.code(), where + e.what());
            }
        }
        out.emplace(frame_id, std::move(boxes));
    }
    return out;
}

FrameBoxes load_annotations(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open annotations " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_annotations(buf.str());
}

std::vector<DetBox> AnnotationDetector::detect(const std::string& frame_id, const GrayImage&) const
{
    const auto it = boxes_.find(frame_id);
    return it == boxes_.end() ? std::vector<DetBox>{} : it->second;
}

LabelMapSegmenter::LabelMapSegmenter(std::filesystem::path dir) : dir_(std::move(dir))
{
    if (!std::filesystem::is_directory(dir_)) {
        throw Error(ErrorCode::MissingLabelMap, "label map directory " + dir_.string() + " does not exist");
    }
}

SegmentationMap LabelMapSegmenter::segment(const std::string& frame_id, const GrayImage& frame) const
{
    if (frame_id.empty() || frame_id.find('/') != std::string::npos || frame_id.find('\\') != std::string::npos ||
        frame_id == "." || frame_id == "..") {
        throw Error(ErrorCode::MissingLabelMap, "frame id '" + frame_id + "' cannot name a label map");
    }
    const auto path = dir_ / (frame_id + ".pgm");
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::MissingLabelMap, "no label map at " + path.string());
    }
    auto map = SegmentationMap::from_image(load_pgm_file(path.string()));
    if (map.width() != frame.width() || map.height() != frame.height()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "label map " + std::to_string(map.width()) + "x" + std::to_string(map.height()) + " vs frame " +
                        std::to_string(frame.width()) + "x" + std::to_string(frame.height()));
    }
    return map;
}

std::unique_ptr<DetectorBackend> stub_detector_from_annotations(const std::filesystem::path& path)
{
    return std::make_unique<AnnotationDetector>(load_annotations(path));
}

std::unique_ptr<SegmenterBackend> stub_segmenter_from_labelmaps(const std::filesystem::path& dir)
{
    return std::make_unique<LabelMapSegmenter>(dir);
}

double iou(const DetBox& a, const DetBox& b)
{
    const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (ix <= 0.0 || iy <= 0.0) {
        return 0.0;
    }
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<DetBox> nms(std::span<const DetBox> boxes, double iou_threshold)
{
    check_threshold(iou_threshold);
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });

    std::vector<bool> keep(boxes.size(), false);
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return boxes[k].cls == boxes[i].cls && iou(boxes[k], boxes[i]) > iou_threshold;
        });
        if (!suppressed) {
            keep[i] = true;
            kept.push_back(i);
        }
    }
    std::vector<DetBox> out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (keep[i]) {
            out.push_back(boxes[i]);
        }
    }
    return out;
}

double average_precision(std::span<const DetBox> dets, std::span<const DetBox> gts, double iou_threshold)
{
    std::vector<RankedDet> ranked;
    ranked.reserve(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        ranked.push_back({0, i, dets[i]});
    }
    return ranked_average_precision(std::move(ranked), {std::vector<DetBox>(gts.begin(), gts.end())}, iou_threshold);
}

double mean_ap(const std::map<std::string, double>& per_class_ap)
{
    if (per_class_ap.empty()) {
        throw Error(ErrorCode::EmptyInput, "mean AP of no classes");
    }
    double sum = 0.0;
    for (const auto& [_, ap] : per_class_ap) {
        sum += ap;
    }
    return sum / double(per_class_ap.size());
}

nlohmann::json EvalResult::to_json() const
{
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, ap] : per_class_ap) {
        per_class[cls] = ap;
    }
    return {{"per_class_ap", per_class}, {"map", map_value}};
}

EvalResult evaluate_detections(const FrameBoxes& dets, const FrameBoxes& gts, double iou_threshold)
{
    check_threshold(iou_threshold);
    std::set<std::string> frames;
    for (const auto& [id, _] : dets) {
        frames.insert(id);
    }
    for (const auto& [id, _] : gts) {
        frames.insert(id);
    }

    EvalResult result;
    for (auto cls : kAllClasses) {
        std::vector<RankedDet> ranked;
        std::vector<std::vector<DetBox>> per_frame_gts;
        bool present = false;
        std::size_t frame_idx = 0;
        std::size_t order = 0;
        for (const auto& id : frames) {
            std::vector<DetBox> frame_gts;
            if (const auto it = gts.find(id); it != gts.end()) {
                std::copy_if(it->second.begin(), it->second.end(), std::back_inserter(frame_gts),
                             [cls](const DetBox& b) { return b.cls == cls; });
            }
            if (const auto it = dets.find(id); it != dets.end()) {
                for (const auto& b : it->second) {
                    if (b.cls == cls) {
                        ranked.push_back({frame_idx, order++, b});
                    }
                }
            }
            present = present || !frame_gts.empty();
            per_frame_gts.push_back(std::move(frame_gts));
            ++frame_idx;
        }
        present = present || !ranked.empty();
        if (present) {
            result.per_class_ap[std::string(to_string(cls))] =
                ranked_average_precision(std::move(ranked), per_frame_gts, iou_threshold);
        }
    }
    result.map_value = result.per_class_ap.empty() ? 0.0 : mean_ap(result.per_class_ap);
    return result;
}

double miou(const SegmentationMap& pred, const SegmentationMap& gt, unsigned num_classes)
{
    if (pred.width() != gt.width() || pred.height() != gt.height()) {
        throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth sizes differ");
    }
    if (num_classes == 0 || num_classes > 256) {
        throw Error(ErrorCode::InvalidArgument, "num_classes must be in 1..256");
    }
    std::array<std::uint64_t, 256> inter{};
    std::array<std::uint64_t, 256> pred_count{};
    std::array<std::uint64_t, 256> gt_count{};
    const auto p = pred.labels();
    const auto g = gt.labels();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] >= num_classes || g[i] >= num_classes) {
            throw Error(ErrorCode::LabelOutOfRange,
                        "label " + std::to_string(std::max(p[i], g[i])) + " >= num_classes " + std::to_string(num_classes));
        }
        ++pred_count[p[i]];
        ++gt_count[g[i]];
        if (p[i] == g[i]) {
            ++inter[p[i]];
        }
    }
    double sum = 0.0;
    unsigned present = 0;
    for (unsigned c = 0; c < num_classes; ++c) {
        const std::uint64_t uni = pred_count[c] + gt_count[c] - inter[c];
        if (uni == 0) {
            continue;
        }
        sum += double(inter[c]) / double(uni);
        ++present;
    }
    return present == 0 ? 1.0 : sum / double(present);
}

}  // namespace distrace
