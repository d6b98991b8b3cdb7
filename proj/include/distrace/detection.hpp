#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "distrace/imgproc.hpp"

namespace distrace {

enum class ObjectClass : std::uint8_t { Person, WithMask, WithoutMask };

inline constexpr ObjectClass kAllClasses[] = {ObjectClass::Person, ObjectClass::WithMask, ObjectClass::WithoutMask};

std::string_view to_string(ObjectClass cls) noexcept;
/// Throws UnknownClass for anything outside {person, with-mask, without-mask}.
ObjectClass object_class_from_string(std::string_view name);

/// Axis-aligned detection; (x, y) is the top-left corner in pixels.
struct DetBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
    double score = 1.0;
    ObjectClass cls = ObjectClass::Person;

    bool operator==(const DetBox&) const = default;
};

/// Throws InvalidArgument unless w > 0, h > 0 and score is in [0, 1].
void validate(const DetBox& box);

nlohmann::json to_json(const DetBox& box);
DetBox det_box_from_json(const nlohmann::json& j);

inline constexpr std::uint8_t kBackgroundLabel = 0;
inline constexpr std::uint8_t kPersonLabel = 1;

class SegmentationMap {
public:
    SegmentationMap(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> labels);
    static SegmentationMap from_image(const GrayImage& img);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return labels_[std::size_t(y) * width_ + x]; }

    /// Foreground wherever the label equals `label`.
    BinaryMask class_mask(std::uint8_t label = kPersonLabel) const;

private:
    std::uint32_t width_;
    std::uint32_t height_;
    std::vector<std::uint8_t> labels_;
};

class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::vector<DetBox> detect(const std::string& frame_id, const GrayImage& frame) const = 0;
};

class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual SegmentationMap segment(const std::string& frame_id, const GrayImage& frame) const = 0;
};

/// Boxes per frame id, as read from annotation NDJSON.
using FrameBoxes = std::map<std::string, std::vector<DetBox>>;

/// One record per line: {"frame_id": "...", "boxes": [{"x","y","w","h","score","class"}]}.
/// "score" defaults to 1 so ground-truth files may omit it.
FrameBoxes load_annotations(const std::filesystem::path& path);
FrameBoxes parse_annotations(std::string_view ndjson);

/// Replays annotated boxes; frames missing from the file yield no boxes.
class AnnotationDetector final : public DetectorBackend {
public:
    explicit AnnotationDetector(FrameBoxes boxes) : boxes_(std::move(boxes)) {}
    std::vector<DetBox> detect(const std::string& frame_id, const GrayImage& frame) const override;

private:
    FrameBoxes boxes_;
};

/// Reads <dir>/<frame_id>.pgm on demand; pixel values are class ids.
class LabelMapSegmenter final : public SegmenterBackend {
public:
    explicit LabelMapSegmenter(std::filesystem::path dir);
    SegmentationMap segment(const std::string& frame_id, const GrayImage& frame) const override;

private:
    std::filesystem::path dir_;
};

std::unique_ptr<DetectorBackend> stub_detector_from_annotations(const std::filesystem::path& path);
std::unique_ptr<SegmenterBackend> stub_segmenter_from_labelmaps(const std::filesystem::path& dir);

double iou(const DetBox& a, const DetBox& b);

/// Greedy per-class suppression by descending score (ties: input order).
/// Kept boxes are returned in input order.
std::vector<DetBox> nms(std::span<const DetBox> boxes, double iou_threshold);

/// All-points interpolated AP of single-class detections against ground truth.
double average_precision(std::span<const DetBox> dets, std::span<const DetBox> gts, double iou_threshold);

double mean_ap(const std::map<std::string, double>& per_class_ap);

struct EvalResult {
    std::map<std::string, double> per_class_ap;
    double map_value = 0.0;

    nlohmann::json to_json() const;
};

/// AP per class over every class that appears in either input, matching
/// detections only against ground truth of the same frame and class.
EvalResult evaluate_detections(const FrameBoxes& dets, const FrameBoxes& gts, double iou_threshold = 0.5);

/// Mean of per-class IoU over the classes present in either map.
double miou(const SegmentationMap& pred, const SegmentationMap& gt, unsigned num_classes);

}  // namespace distrace
