#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "distrace/detection.hpp"
#include "distrace/error.hpp"
#include "oracles.hpp"

using namespace distrace;

namespace {

DetBox box(double x, double y, double w, double h, double score = 1.0, ObjectClass cls = ObjectClass::Person)
{
    return DetBox{x, y, w, h, score, cls};
}

DetBox random_box(std::mt19937_64& rng, int extent = 20)
{
    std::uniform_int_distribution<int> pos(0, extent);
    std::uniform_int_distribution<int> size(1, extent / 2);
    std::uniform_real_distribution<double> score(0, 1);
    return box(pos(rng), pos(rng), size(rng), size(rng), score(rng));
}

template <typename F>
ErrorCode code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Iou, MatchesRasterOracleExactly)
{
    std::mt19937_64 rng(42);
    for (int t = 0; t < 500; ++t) {
        const auto a = random_box(rng);
        const auto b = random_box(rng);
        EXPECT_EQ(iou(a, b), oracle::raster_iou(a, b)) << t;
        EXPECT_EQ(iou(a, b), iou(b, a));
    }
    EXPECT_EQ(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)), 1.0);
    EXPECT_EQ(iou(box(0, 0, 2, 2), box(2, 0, 2, 2)), 0.0);
}

TEST(Nms, MatchesQuadraticOracle)
{
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        std::vector<DetBox> boxes;
        for (int i = 0; i < 12; ++i) {
            auto b = random_box(rng, 12);
            b.cls = kAllClasses[rng() % 3];
            boxes.push_back(b);
        }
        const auto kept = nms(boxes, 0.3);
        const auto idx = oracle::nms_indices(boxes, 0.3);
        ASSERT_EQ(kept.size(), idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            EXPECT_EQ(kept[i], boxes[idx[i]]);
        }
    }
}

TEST(Nms, KeepsOtherClassesAndRejectsBadThreshold)
{
    const std::vector<DetBox> boxes{box(0, 0, 10, 10, 0.9), box(0, 0, 10, 10, 0.8, ObjectClass::WithMask),
                                    box(1, 1, 10, 10, 0.7)};
    EXPECT_EQ(nms(boxes, 0.5).size(), 2u);
    EXPECT_EQ(code_of([&] { (void)nms(boxes, 1.5); }), ErrorCode::BadThreshold);
}

TEST(AveragePrecision, HandSteppedExample)
{
    // 3 gts, 4 detections, the false positive ranked last: AP = 1.
    const std::vector<DetBox> gts{box(0, 0, 10, 10), box(20, 0, 10, 10), box(40, 0, 10, 10)};
    const std::vector<DetBox> dets{box(0, 0, 10, 10, 0.9), box(20, 0, 10, 10, 0.8), box(40, 0, 10, 10, 0.7),
                                   box(70, 0, 10, 10, 0.6)};
    EXPECT_EQ(average_precision(dets, gts, 0.5), 1.0);

    // false positive ranked second: PR = (1/3,1), (1/3,1/2), (2/3,2/3), (1,3/4)
    std::vector<DetBox> mixed = dets;
    mixed[3].score = 0.85;
    EXPECT_NEAR(average_precision(mixed, gts, 0.5), (1.0 + 0.75 + 0.75) / 3.0, 1e-12);
}

TEST(AveragePrecision, MatchesEnvelopeOracle)
{
    std::mt19937_64 rng(77);
    for (int t = 0; t < 50; ++t) {
        std::vector<DetBox> gts, dets;
        for (int i = 0, n = int(rng() % 5) + 1; i < n; ++i) {
            gts.push_back(random_box(rng, 16));
        }
        for (int i = 0, n = int(rng() % 10); i < n; ++i) {
            dets.push_back(random_box(rng, 16));
        }
        EXPECT_NEAR(average_precision(dets, gts, 0.5), oracle::average_precision(dets, gts, 0.5), 1e-12) << t;
    }
}

TEST(AveragePrecision, EmptyCases)
{
    EXPECT_EQ(average_precision({}, {}, 0.5), 1.0);
    const std::vector<DetBox> one{box(0, 0, 1, 1)};
    EXPECT_EQ(average_precision(one, {}, 0.5), 0.0);
    EXPECT_EQ(average_precision({}, one, 0.5), 0.0);
}

TEST(Evaluate, PerfectDetectionsGiveMapOne)
{
    FrameBoxes gts{{"a", {box(0, 0, 5, 5), box(10, 10, 4, 4, 1, ObjectClass::WithMask)}},
                   {"b", {box(3, 3, 6, 6, 1, ObjectClass::WithoutMask)}}};
    const auto r = evaluate_detections(gts, gts, 0.5);
    EXPECT_EQ(r.map_value, 1.0);
    EXPECT_EQ(r.per_class_ap.size(), 3u);
    const auto j = r.to_json();
    EXPECT_EQ(j["map"].get<double>(), 1.0);
    EXPECT_TRUE(j["per_class_ap"].contains("with-mask"));
}

TEST(Evaluate, DetectionsInOtherFrameDoNotMatch)
{
    FrameBoxes gts{{"a", {box(0, 0, 5, 5)}}};
    FrameBoxes dets{{"b", {box(0, 0, 5, 5)}}};
    EXPECT_EQ(evaluate_detections(dets, gts).map_value, 0.0);
}

TEST(Miou, WorkedTwoByTwoExample)
{
    // pred [[0,1],[1,1]], gt [[0,0],[1,1]]: class 0 IoU 1/2, class 1 IoU 2/3
    const SegmentationMap pred(2, 2, {0, 1, 1, 1});
    const SegmentationMap gt(2, 2, {0, 0, 1, 1});
    EXPECT_NEAR(miou(pred, gt, 2), 7.0 / 12.0, 1e-12);
}

TEST(Miou, IgnoresAbsentClassesAndValidates)
{
    const SegmentationMap a(2, 1, {0, 0});
    EXPECT_EQ(miou(a, a, 5), 1.0);
    EXPECT_EQ(code_of([&] { (void)miou(a, SegmentationMap(1, 2, {0, 0}), 2); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([&] { (void)miou(SegmentationMap(2, 1, {0, 3}), a, 2); }), ErrorCode::LabelOutOfRange);
}

TEST(Annotations, ParseStrictly)
{
    const auto frames = parse_annotations(
        R"({"frame_id":"f1","boxes":[{"x":1,"y":2,"w":3,"h":4,"class":"with-mask","score":0.5}]})"
        "\n\n"
        R"({"frame_id":"f2","boxes":[]})"
        "\n");
    ASSERT_EQ(frames.size(), 2u);
    EXPECT_EQ(frames.at("f1")[0].cls, ObjectClass::WithMask);
    EXPECT_EQ(frames.at("f1")[0].score, 0.5);

    EXPECT_EQ(code_of([] { (void)parse_annotations(R"({"frame_id":"f","boxes":[],"x":1})"); }),
              ErrorCode::MalformedAnnotation);
    EXPECT_EQ(code_of([] { (void)parse_annotations("{\"frame_id\":\"f\",\"boxes\":[]}\n{\"frame_id\":\"f\",\"boxes\":[]}"); }),
              ErrorCode::MalformedAnnotation);
    EXPECT_EQ(code_of([] {
                  (void)parse_annotations(R"({"frame_id":"f","boxes":[{"x":1,"y":2,"w":3,"h":4,"class":"cat"}]})");
              }),
              ErrorCode::UnknownClass);
    EXPECT_EQ(code_of([] { (void)parse_annotations("not json"); }), ErrorCode::MalformedAnnotation);
}

TEST(Classes, NamesRoundTrip)
{
    for (auto c : kAllClasses) {
        EXPECT_EQ(object_class_from_string(to_string(c)), c);
    }
    EXPECT_EQ(to_string(ObjectClass::WithoutMask), "without-mask");
}

TEST(Backends, StubsServeFixtures)
{
    const auto dir = std::filesystem::temp_directory_path() / "distrace_backend_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "labels");
    {
        std::ofstream(dir / "ann.ndjson") << R"({"frame_id":"f1","boxes":[{"x":1,"y":1,"w":2,"h":2,"class":"person"}]})"
                                          << "\n";
        save_pgm_file(GrayImage(4, 3, std::vector<std::uint8_t>{0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0}),
                      (dir / "labels" / "f1.pgm").string());
    }
    const GrayImage frame(4, 3, 0);
    const auto det = stub_detector_from_annotations(dir / "ann.ndjson");
    EXPECT_EQ(det->detect("f1", frame).size(), 1u);
    EXPECT_TRUE(det->detect("unknown", frame).empty());

    const auto seg = stub_segmenter_from_labelmaps(dir / "labels");
    EXPECT_EQ(seg->segment("f1", frame).class_mask().count(), 4u);
    EXPECT_EQ(code_of([&] { (void)seg->segment("f2", frame); }), ErrorCode::MissingLabelMap);
    EXPECT_EQ(code_of([&] { (void)seg->segment("f1", GrayImage(5, 5, 0)); }), ErrorCode::DimensionMismatch);
    std::filesystem::remove_all(dir);
}
