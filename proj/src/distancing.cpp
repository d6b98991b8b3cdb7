#include "distrace/distancing.hpp"

#include <algorithm>
#include <cmath>

#include "distrace/error.hpp"

namespace distrace {

CalibrationProfile::CalibrationProfile(double reference_width_px, double reference_width_m)
    : reference_width_px_(reference_width_px), reference_width_m_(reference_width_m), pixels_per_metre_(0.0)
{
    if (!(reference_width_px > 0.0) || !(reference_width_m > 0.0) || !std::isfinite(reference_width_px) ||
        !std::isfinite(reference_width_m)) {
        throw Error(ErrorCode::NonPositiveCalibration, "reference width must be positive and finite in px and m");
    }
    pixels_per_metre_ = reference_width_px / reference_width_m;
    if (!std::isfinite(pixels_per_metre_) || !(pixels_per_metre_ > 0.0)) {
        throw Error(ErrorCode::NonPositiveCalibration, "pixels per metre is not a positive finite number");
    }
}

CalibrationProfile calibrate(double reference_width_px, double reference_width_m)
{
    return CalibrationProfile(reference_width_px, reference_width_m);
}

std::string to_string(PairKind kind)
{
    return kind == PairKind::Chain ? "chain" : "all_pairs";
}

std::string to_string(PairLabel label)
{
    return label == PairLabel::FollowingDistance ? "following-distance" : "not-following-distance";
}

PairKind pair_kind_from_string(const std::string& s)
{
    if (s == "chain") {
        return PairKind::Chain;
    }
    if (s == "all_pairs") {
        return PairKind::AllPairs;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown pair kind '" + s + "'");
}

PairLabel pair_label_from_string(const std::string& s)
{
    if (s == "following-distance") {
        return PairLabel::FollowingDistance;
    }
    if (s == "not-following-distance") {
        return PairLabel::NotFollowingDistance;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown pair label '" + s + "'");
}

std::vector<DetectedObject> extract_objects(const BinaryMask& person_mask, const DistancingConfig& config)
{
    const BinaryMask edges = canny(to_gray(person_mask), config.canny);
    const BinaryMask closed = close_gaps(edges, StructuringElement::box(config.se_size), config.iterations);

    std::vector<DetectedObject> objects;
    for (const auto& contour : find_contours(closed, config.min_area)) {
        DetectedObject obj;
        obj.box = min_area_rect(contour);
        obj.corners = order_corners(obj.box);
        obj.center = box_center(obj.corners);
        obj.top_mid = midpoint(obj.corners.tl, obj.corners.tr);
        obj.right_mid = midpoint(obj.corners.tr, obj.corners.br);
        objects.push_back(obj);
    }
    std::stable_sort(objects.begin(), objects.end(), [](const DetectedObject& a, const DetectedObject& b) {
        return a.corners.tl.x != b.corners.tl.x ? a.corners.tl.x < b.corners.tl.x : a.corners.tl.y < b.corners.tl.y;
    });
    return objects;
}

std::vector<DistancePair> chain_distances(std::span<const DetectedObject> objects, const CalibrationProfile& profile)
{
    std::vector<DistancePair> pairs;
    for (std::size_t i = 0; i + 1 < objects.size(); ++i) {
        DistancePair p;
        p.id_a = i;
        p.id_b = i + 1;
        p.px_distance = euclidean(objects[i].top_mid, objects[i + 1].top_mid);
        p.metric_distance = profile.to_metres(p.px_distance);
        p.kind = PairKind::Chain;
        pairs.push_back(p);
    }
    return pairs;
}

std::vector<DistancePair> all_pairs_distances(std::span<const DetectedObject> objects,
                                              const CalibrationProfile& profile)
{
    std::vector<DistancePair> pairs;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        for (std::size_t j = i + 1; j < objects.size(); ++j) {
            DistancePair p;
            p.id_a = i;
            p.id_b = j;
            p.px_distance = euclidean(objects[i].center, objects[j].center);
            p.metric_distance = profile.to_metres(p.px_distance);
            p.kind = PairKind::AllPairs;
            pairs.push_back(p);
        }
    }
    return pairs;
}

ComplianceReport classify_compliance(std::vector<DistancePair> pairs, double threshold_m, std::string frame_id)
{
    if (!(threshold_m > 0.0) || !std::isfinite(threshold_m)) {
        throw Error(ErrorCode::NonPositiveThreshold, "distance threshold must be positive");
    }
    ComplianceReport report;
    report.frame_id = std::move(frame_id);
    report.threshold_m = threshold_m;
    for (auto& p : pairs) {
        p.label = p.metric_distance < threshold_m ? PairLabel::NotFollowingDistance : PairLabel::FollowingDistance;
        if (p.label == PairLabel::NotFollowingDistance) {
            ++report.violations;
        }
    }
    report.score = pairs.empty() ? 1.0 : 1.0 - double(report.violations) / double(pairs.size());
    report.pairs = std::move(pairs);
    return report;
}

ComplianceReport table2_pipeline(const BinaryMask& person_mask, const CalibrationProfile& profile, double threshold_m,
                                 const DistancingConfig& config, std::string frame_id)
{
    if (!(threshold_m > 0.0) || !std::isfinite(threshold_m)) {
        throw Error(ErrorCode::NonPositiveThreshold, "distance threshold must be positive");
    }
    const auto objects = extract_objects(person_mask, config);
    ComplianceReport report = classify_compliance(all_pairs_distances(objects, profile), threshold_m, std::move(frame_id));
    report.object_count = objects.size();
    report.chain = chain_distances(objects, profile);
    for (auto& p : report.chain) {
        p.label = p.metric_distance < threshold_m ? PairLabel::NotFollowingDistance : PairLabel::FollowingDistance;
    }
    return report;
}

}  // namespace distrace
