#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "distrace/geometry.hpp"
#include "distrace/imgproc.hpp"

namespace distrace {

/// Pixel-to-metre conversion from a reference object of known width.
class CalibrationProfile {
public:
    CalibrationProfile(double reference_width_px, double reference_width_m);

    double reference_width_px() const noexcept { return reference_width_px_; }
    double reference_width_m() const noexcept { return reference_width_m_; }
    double pixels_per_metre() const noexcept { return pixels_per_metre_; }
    double to_metres(double pixels) const noexcept { return pixels / pixels_per_metre_; }

private:
    double reference_width_px_;
    double reference_width_m_;
    double pixels_per_metre_;
};

CalibrationProfile calibrate(double reference_width_px, double reference_width_m);

enum class PairKind { Chain, AllPairs };
enum class PairLabel { FollowingDistance, NotFollowingDistance };

std::string to_string(PairKind kind);
std::string to_string(PairLabel label);
PairKind pair_kind_from_string(const std::string& s);
PairLabel pair_label_from_string(const std::string& s);

struct DistancePair {
    std::size_t id_a = 0;  // left-to-right rank
    std::size_t id_b = 0;
    double px_distance = 0.0;
    double metric_distance = 0.0;
    PairKind kind = PairKind::AllPairs;
    PairLabel label = PairLabel::FollowingDistance;

    bool operator==(const DistancePair&) const = default;
};

/// Per-frame result. `pairs` is the compliance basis (all-pairs centre
/// distances) and carries the labels; `chain` holds the left-to-right
/// top-edge midpoint distances, reported alongside but never counted.
struct ComplianceReport {
    std::string frame_id;
    std::size_t object_count = 0;
    std::vector<DistancePair> pairs;
    std::vector<DistancePair> chain;
    double threshold_m = 0.0;
    std::size_t violations = 0;
    double score = 1.0;

    bool operator==(const ComplianceReport&) const = default;
};

inline constexpr double kDefaultThresholdM = 2.0;

struct DistancingConfig {
    CannyParams canny;
    std::uint32_t se_size = 3;
    unsigned iterations = 1;
    double min_area = kDefaultMinArea;
};

struct DetectedObject {
    RotatedBox box;
    OrderedCorners corners;
    Point center;
    Point top_mid;    // midpoint(tl, tr)
    Point right_mid;  // midpoint(tr, br)
};

/// Canny edge map of the mask, gap closing, contours, then one rotated box
/// per contour. Sorted left-most first by top-left corner (x, then y).
std::vector<DetectedObject> extract_objects(const BinaryMask& person_mask, const DistancingConfig& config);

/// Consecutive objects compared by their top-edge midpoints; n objects give n-1 pairs.
std::vector<DistancePair> chain_distances(std::span<const DetectedObject> objects, const CalibrationProfile& profile);

/// Centre-to-centre distance for every unordered pair; n(n-1)/2 pairs.
std::vector<DistancePair> all_pairs_distances(std::span<const DetectedObject> objects,
                                              const CalibrationProfile& profile);

ComplianceReport classify_compliance(std::vector<DistancePair> pairs, double threshold_m, std::string frame_id);

ComplianceReport table2_pipeline(const BinaryMask& person_mask, const CalibrationProfile& profile, double threshold_m,
                                 const DistancingConfig& config, std::string frame_id);

}  // namespace distrace
