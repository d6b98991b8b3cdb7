#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "scene.hpp"

namespace {

const std::string kCli = DISTRACE_CLI_PATH;

struct Result {
    int status;
    std::string out;
};

Result run(const std::string& args)
{
    const std::string cmd = kCli + " " + args + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) {
        out.append(buf.data(), n);
    }
    const int rc = ::pclose(pipe);
    return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, out};
}

std::filesystem::path tmp(const std::string& name)
{
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne)
{
    EXPECT_EQ(run("").status, 1);
    EXPECT_EQ(run("distance --mask x.pgm").status, 1);
    EXPECT_EQ(run("no-such-command").status, 1);
}

TEST(Cli, DistanceOnTwoSquares)
{
    const auto dir = tmp("distrace_cli_distance");
    distrace::save_pgm_file(distrace::to_gray(scene::two_squares()), (dir / "mask.pgm").string());
    const auto r = run("distance --mask " + (dir / "mask.pgm").string() + " --ref-px 100 --ref-m 0.5");
    ASSERT_EQ(r.status, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["pairs"][0]["metric_distance"].get<double>(), 1.5, 0.03);
    EXPECT_EQ(j["violations"], 1);
    EXPECT_EQ(run("distance --mask " + (dir / "missing.pgm").string() + " --ref-px 100 --ref-m 0.5").status, 2);
    std::filesystem::remove_all(dir);
}

TEST(Cli, EvalMiouPrintsNumber)
{
    const auto dir = tmp("distrace_cli_miou");
    const distrace::GrayImage pred(2, 2, std::vector<std::uint8_t>{0, 1, 1, 1});
    const distrace::GrayImage gt(2, 2, std::vector<std::uint8_t>{0, 0, 1, 1});
    distrace::save_pgm_file(pred, (dir / "p.pgm").string());
    distrace::save_pgm_file(gt, (dir / "g.pgm").string());
    const auto r = run("eval-miou --pred " + (dir / "p.pgm").string() + " --gt " + (dir / "g.pgm").string() +
                       " --classes 2");
    ASSERT_EQ(r.status, 0);
    EXPECT_NEAR(std::stod(r.out), 7.0 / 12.0, 1e-12);
    const auto same = run("eval-miou --pred " + (dir / "p.pgm").string() + " --gt " + (dir / "p.pgm").string() +
                          " --classes 2");
    EXPECT_EQ(same.out, "1.0\n");
    std::filesystem::remove_all(dir);
}

TEST(Cli, EvalMapPerfectDetections)
{
    const auto dir = tmp("distrace_cli_map");
    std::ofstream(dir / "gt.ndjson")
        << R"({"frame_id":"a","boxes":[{"x":0,"y":0,"w":4,"h":4,"class":"person"}]})" << '\n';
    const auto r = run("eval-map --dets " + (dir / "gt.ndjson").string() + " --gts " + (dir / "gt.ndjson").string());
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(nlohmann::json::parse(r.out)["map"].get<double>(), 1.0);
    std::filesystem::remove_all(dir);
}

TEST(Cli, PipelineAndBench)
{
    const auto fx = scene::write(std::filesystem::temp_directory_path() / "distrace_cli_pipeline", 2);
    const auto p = run("pipeline --config " + fx.config.string());
    ASSERT_EQ(p.status, 0);
    EXPECT_EQ(nlohmann::json::parse(p.out)["events"], 4);

    const auto b = run("bench --config " + fx.config.string());
    ASSERT_EQ(b.status, 0);
    const auto j = nlohmann::json::parse(b.out);
    EXPECT_EQ(j["frames"], 4);
    EXPECT_GT(j["fps"].get<double>(), 0.0);

    EXPECT_EQ(run("pipeline --config /nonexistent.json").status, 2);
    std::filesystem::remove_all(fx.dir);
}

TEST(Cli, PipelineWithUnreachableCollectorExitsTwo)
{
    const auto fx = scene::write(std::filesystem::temp_directory_path() / "distrace_cli_unreach", 1, false,
                                 {{"tcp", {{"host", "127.0.0.1"}, {"port", 1}, {"retry_max", 1}, {"backoff_ms", 1}}}});
    const auto p = run("pipeline --config " + fx.config.string());
    EXPECT_EQ(p.status, 2);
    EXPECT_EQ(nlohmann::json::parse(p.out)["delivery"]["unreachable"], true);
    std::filesystem::remove_all(fx.dir);
}
