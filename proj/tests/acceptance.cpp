// Acceptance checks: one [PASS]/[FAIL] line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "distrace/bench.hpp"
#include "distrace/detection.hpp"
#include "distrace/distancing.hpp"
#include "distrace/geometry.hpp"
#include "distrace/pipeline.hpp"
#include "distrace/transport.hpp"
#include "oracles.hpp"
#include "scene.hpp"

using namespace distrace;
using namespace std::chrono_literals;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

std::filesystem::path scratch(const std::string& name)
{
    const auto p = std::filesystem::temp_directory_path() / ("distrace_acceptance_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string fmt(double v, int prec = 4)
{
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

Outcome rotated_rect_oracle()
{
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> count(1, 50);
    std::uniform_real_distribution<double> coord(0.0, 1000.0);
    double worst = 0.0;
    const auto start = Clock::now();
    for (int t = 0; t < 300; ++t) {
        std::vector<Point> pts(std::size_t(count(rng)));
        for (auto& p : pts) {
            p = {coord(rng), coord(rng)};
        }
        const double got = min_area_rect(pts).area();
        const double ref = oracle::min_rect_area(pts);
        // collinear sets have zero area; the oracle's rounding leaves ~1e-13 there
        worst = std::max(worst, std::abs(got - ref) / std::max(ref, 1.0));
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    return {worst <= 1e-9 && secs < 5.0, "max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome contour_oracle()
{
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> density(0.1, 0.6);
    int mismatches = 0;
    for (int t = 0; t < 200; ++t) {
        const auto m = oracle::random_mask(rng, 64, 64, density(rng));
        const auto comps = oracle::components8(m);
        std::multiset<std::set<std::pair<int, int>>> expected;
        std::size_t kept = 0;
        for (const auto& c : comps) {
            if (double(c.size()) >= kDefaultMinArea) {
                expected.insert(oracle::boundary_pixels(m, c));
                ++kept;
            }
        }
        const auto contours = find_contours(m);
        std::multiset<std::set<std::pair<int, int>>> actual;
        for (const auto& c : contours) {
            std::set<std::pair<int, int>> s;
            for (const auto& p : c.boundary_pixels()) {
                s.insert({p.x, p.y});
            }
            actual.insert(std::move(s));
        }
        if (contours.size() != kept || actual != expected) {
            ++mismatches;
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 200 masks differ"};
}

Outcome table2_scene()
{
    const auto mask = scene::two_squares();
    const auto profile = calibrate(100, 0.5);
    const auto strict = table2_pipeline(mask, profile, 2.0, DistancingConfig{}, "ac3");
    const auto loose = table2_pipeline(mask, profile, 1.0, DistancingConfig{}, "ac3");
    if (strict.pairs.size() != 1) {
        return {false, std::to_string(strict.object_count) + " objects found"};
    }
    const double d = strict.pairs[0].metric_distance;
    const bool ok = std::abs(d - 1.5) <= 0.03 && strict.violations == 1 && strict.score == 0.0 &&
                    loose.violations == 0 && loose.score == 1.0;
    return {ok, "distance " + fmt(d, 6) + " m, violations " + std::to_string(strict.violations) + "/" +
                    std::to_string(loose.violations)};
}

Outcome metrics_exactness()
{
    const double m = miou(SegmentationMap(2, 2, {0, 1, 1, 1}), SegmentationMap(2, 2, {0, 0, 1, 1}), 2);
    const bool miou_ok = std::abs(m - 7.0 / 12.0) <= 1e-12;

    std::mt19937_64 rng(404);
    auto rand_box = [&](int extent) {
        std::uniform_int_distribution<int> pos(0, extent), size(1, extent / 2);
        std::uniform_real_distribution<double> score(0, 1);
        return DetBox{double(pos(rng)), double(pos(rng)), double(size(rng)), double(size(rng)), score(rng)};
    };
    int iou_bad = 0;
    for (int t = 0; t < 500; ++t) {
        const auto a = rand_box(30), b = rand_box(30);
        iou_bad += iou(a, b) != oracle::raster_iou(a, b);
    }
    int ap_bad = 0;
    for (int t = 0; t < 30; ++t) {
        std::vector<DetBox> gts, dets;
        for (int i = 0, n = 1 + int(rng() % 5); i < n; ++i) {
            gts.push_back(rand_box(16));
        }
        for (int i = 0, n = int(rng() % 6); i < n; ++i) {
            dets.push_back(rand_box(16));
        }
        ap_bad += std::abs(average_precision(dets, gts, 0.5) - oracle::average_precision(dets, gts, 0.5)) > 1e-12;
    }
    FrameBoxes gts{{"a", {DetBox{0, 0, 5, 5, 1, ObjectClass::Person}, DetBox{9, 9, 3, 3, 1, ObjectClass::WithMask}}},
                   {"b", {DetBox{2, 2, 4, 4, 1, ObjectClass::WithoutMask}}}};
    const bool perfect = evaluate_detections(gts, gts).map_value == 1.0;
    return {miou_ok && iou_bad == 0 && ap_bad == 0 && perfect,
            "miou " + fmt(m, 17) + ", iou mismatches " + std::to_string(iou_bad) + ", ap mismatches " +
                std::to_string(ap_bad) + ", perfect mAP " + (perfect ? "1.0" : "!= 1.0")};
}

Outcome morphology_properties()
{
    std::mt19937_64 rng(505);
    int failures = 0;
    for (int t = 0; t < 100; ++t) {
        const auto m = oracle::random_mask(rng, 32, 24, 0.1 + 0.5 * double(t % 10) / 10.0);
        const std::uint32_t sizes[] = {1, 3, 5};
        const std::uint32_t w = sizes[rng() % 3], h = sizes[rng() % 3];
        std::vector<std::uint8_t> bits(std::size_t(w) * h);
        for (auto& b : bits) {
            b = std::uint8_t(rng() % 2);
        }
        bits[(h / 2) * w + w / 2] = 1;
        const StructuringElement se(w, h, bits);

        const auto d = dilate(m, se), e = erode(m, se);
        bool ok = true;
        for (std::size_t i = 0; i < m.bits().size(); ++i) {
            ok &= !m.bits()[i] || d.bits()[i];
            ok &= !e.bits()[i] || m.bits()[i];
        }
        // duality on a padded canvas, since outside pixels count as background
        const std::uint32_t r = std::max(w, h);
        BinaryMask padded(m.width() + 2 * r, m.height() + 2 * r);
        for (std::uint32_t y = 0; y < m.height(); ++y) {
            for (std::uint32_t x = 0; x < m.width(); ++x) {
                padded.set(x + r, y + r, m.at(x, y));
            }
        }
        const auto dual = dilate(padded.complement(), se.reflected()).complement();
        for (std::uint32_t y = 0; y < m.height(); ++y) {
            for (std::uint32_t x = 0; x < m.width(); ++x) {
                ok &= dual.at(x + r, y + r) == e.at(x, y);
            }
        }
        const auto closed = close_gaps(m, se, 1);
        ok &= close_gaps(closed, se, 1) == closed;
        failures += !ok;
    }
    return {failures == 0, std::to_string(failures) + " failures over 100 masks"};
}

Outcome throughput(std::string& bench_json)
{
    std::vector<BinaryMask> masks;
    for (std::uint64_t i = 0; i < 100; ++i) {
        masks.push_back(synthetic_scene(640, 480, 8, i));
    }
    const auto report = measure_masks(masks, calibrate(100, 0.5), 2.0, DistancingConfig{}, 1);
    bench_json = report.to_json().dump();
    const std::string verdict = report.fps >= 30.0 ? "target met" : report.fps >= 15.0 ? "above floor only" : "below floor";
    return {report.fps >= 30.0, fmt(report.fps) + " fps on 640x480 (" + verdict + ")"};
}

Outcome fixture_fidelity()
{
    const std::filesystem::path tables = DISTRACE_TABLES_DIR;
    const auto t5 = rank_fixtures(load_fixtures(tables / "table5.csv"), "inf_fps");
    const auto t7 = rank_fixtures(load_fixtures(tables / "table7.csv"), "miou");
    std::size_t fast = t5.size(), yolo = t5.size();
    for (std::size_t i = 0; i < t5.size(); ++i) {
        if (t5[i].model == "Fast- YOLO" && t5[i].inf_fps == 155.0) fast = i;
        if (t5[i].model == "YOLO" && t5[i].inf_fps == 45.0) yolo = i;
    }
    const bool ok = fast < yolo && yolo < t5.size() && !t7.empty() && t7[0].miou == 81.9;
    return {ok, "Fast- YOLO rank " + std::to_string(fast) + ", YOLO rank " + std::to_string(yolo) + ", max mIoU " +
                    (t7.empty() ? std::string("none") : fmt(*t7[0].miou))};
}

Outcome determinism()
{
    const auto fx = scene::write(scratch("determinism"), 5, true);
    const auto config = PipelineConfig::load(fx.config);
    (void)run_pipeline(config);
    const auto first = scene::slurp(fx.dir / "events.ndjson");
    (void)run_pipeline(config);
    const auto second = scene::slurp(fx.dir / "events.ndjson");
    std::filesystem::remove_all(fx.dir);
    return {!first.empty() && first == second, std::to_string(first.size()) + " bytes, identical " +
                                                   (first == second ? "yes" : "no")};
}

std::vector<std::uint64_t> seqs_in(const std::filesystem::path& p)
{
    std::vector<std::uint64_t> out;
    std::istringstream in(scene::slurp(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            out.push_back(parse_event(line).seq);
        }
    }
    return out;
}

Event numbered(std::uint64_t seq)
{
    Event e = make_error_event("f" + std::to_string(seq), ErrorInfo{"acceptance", "none", "x"});
    e.seq = seq;
    return e;
}

Outcome delivery_under_faults()
{
    const RetryPolicy policy{5, 20ms};

    const auto dir = scratch("delivery");
    auto collector = std::make_unique<Collector>("127.0.0.1:0", dir / "out.ndjson");
    const auto port = collector->port();
    TcpSender sender({"127.0.0.1", port}, policy, dir / "spool", {64});
    for (std::uint64_t i = 0; i < 1000; ++i) {
        sender.send(numbered(i));
        if (i == 500) {
            std::this_thread::sleep_for(30ms);
            collector.reset();
            std::this_thread::sleep_for(100ms);
            collector = std::make_unique<Collector>("127.0.0.1:" + std::to_string(port), dir / "out.ndjson");
        }
    }
    const auto faulted = sender.finish();
    collector.reset();
    std::set<std::uint64_t> seen;
    for (auto s : seqs_in(dir / "out.ndjson")) seen.insert(s);
    for (auto s : seqs_in(dir / "spool")) seen.insert(s);
    const bool all = seen.size() == 1000 && *seen.rbegin() == 999;

    const auto healthy_dir = scratch("delivery_healthy");
    Collector healthy("127.0.0.1:0", healthy_dir / "out.ndjson");
    std::vector<Event> events;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        events.push_back(numbered(i));
    }
    (void)send_tcp(events, {"127.0.0.1", healthy.port()}, policy, healthy_dir / "spool");
    healthy.stop();
    const auto received = seqs_in(healthy_dir / "out.ndjson");
    bool ordered = received.size() == 1000;
    for (std::size_t i = 0; ordered && i < received.size(); ++i) {
        ordered = received[i] == i;
    }
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(healthy_dir);
    return {all && ordered, "restart run covers " + std::to_string(seen.size()) + "/1000 seq (" +
                                std::to_string(faulted.respooled) + " requeued), healthy run " +
                                std::to_string(received.size()) + " lines " + (ordered ? "in order" : "out of order")};
}

Outcome compliance_properties()
{
    int failures = 0;
    auto violations = [](const ComplianceReport& r) {
        std::set<std::pair<std::size_t, std::size_t>> s;
        for (const auto& p : r.pairs) {
            if (p.label == PairLabel::NotFollowingDistance) s.insert({p.id_a, p.id_b});
        }
        return s;
    };
    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> thr(0.2, 3.0), scale(0.25, 8.0);
    for (std::uint64_t layout = 0; layout < 100; ++layout) {
        const auto mask = synthetic_scene(320, 240, 2 + unsigned(layout % 6), 5000 + layout);
        const auto objects = extract_objects(mask, DistancingConfig{});
        const auto profile = calibrate(80, 0.5);
        const double t1 = thr(rng), t2 = t1 + thr(rng);
        const auto lo = violations(classify_compliance(all_pairs_distances(objects, profile), t1, "p"));
        const auto hi = violations(classify_compliance(all_pairs_distances(objects, profile), t2, "p"));
        bool ok = std::includes(hi.begin(), hi.end(), lo.begin(), lo.end());
        const double k = scale(rng);
        const auto scaled = violations(classify_compliance(all_pairs_distances(objects, calibrate(80 * k, 0.5)), t1 / k, "p"));
        ok &= scaled == lo;
        failures += !ok;
    }
    return {failures == 0, std::to_string(failures) + " failures over 100 layouts"};
}

}  // namespace

int main()
{
    std::string bench_json;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"AC1 rotated-rectangle oracle equivalence", rotated_rect_oracle},
        {"AC2 contour oracle equivalence", contour_oracle},
        {"AC3 end-to-end two-squares scene", table2_scene},
        {"AC4 metrics exactness", metrics_exactness},
        {"AC5 morphology property suite", morphology_properties},
        {"AC6 throughput on 640x480 synthetic frames", [&] { return throughput(bench_json); }},
        {"AC7 fixture fidelity", fixture_fidelity},
        {"AC8 pipeline determinism", determinism},
        {"AC9 delivery under faults", delivery_under_faults},
        {"AC10 compliance properties", compliance_properties},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << '\n';
    }
    if (!bench_json.empty()) {
        std::cout << "bench " << bench_json << '\n';
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
    return failed == 0 ? 0 : 1;
}
