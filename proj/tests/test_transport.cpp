#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "distrace/error.hpp"
#include "distrace/transport.hpp"

using namespace distrace;
using namespace std::chrono_literals;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name)
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

Event numbered(std::uint64_t seq)
{
    Event e = make_error_event("frame" + std::to_string(seq), ErrorInfo{"test", "none", "payload"});
    e.seq = seq;
    return e;
}

std::vector<std::uint64_t> seqs_in(const std::filesystem::path& p)
{
    std::vector<std::uint64_t> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            out.push_back(parse_event(line).seq);
        }
    }
    return out;
}

/// A port that nothing listens on: bound, then released.
std::uint16_t closed_port()
{
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

int raw_connect(std::uint16_t port)
{
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return -1;
    }
    return fd;
}

/// Half-closes and waits for the collector's own close.
void finish_raw(int fd)
{
    ::shutdown(fd, SHUT_WR);
    char buf[64];
    while (::recv(fd, buf, sizeof(buf), 0) > 0) {
    }
    ::close(fd);
}

const RetryPolicy kFast{5, 20ms};

}  // namespace

TEST(Endpoint, Parse)
{
    const auto ep = Endpoint::parse("127.0.0.1:9000");
    EXPECT_EQ(ep.host, "127.0.0.1");
    EXPECT_EQ(ep.port, 9000);
    EXPECT_EQ(ep.to_string(), "127.0.0.1:9000");
    for (const char* bad : {"", "host", "host:", ":1", "h:70000", "h:x"}) {
        EXPECT_THROW((void)Endpoint::parse(bad), Error) << bad;
    }
}

TEST(Transport, HappyPathInOrderWithoutGaps)
{
    TempDir dir("distrace_tx_happy");
    Collector collector("127.0.0.1:0", dir.path / "out.ndjson");
    std::vector<Event> events;
    for (std::uint64_t i = 0; i < 100; ++i) {
        events.push_back(numbered(i));
    }
    const auto report = send_tcp(events, {"127.0.0.1", collector.port()}, kFast, dir.path / "spool", {16});
    collector.stop();
    EXPECT_EQ(report.sent, 100u);
    EXPECT_EQ(report.spooled, 0u);
    EXPECT_FALSE(report.unreachable);
    const auto seqs = seqs_in(dir.path / "out.ndjson");
    ASSERT_EQ(seqs.size(), 100u);
    for (std::uint64_t i = 0; i < 100; ++i) {
        EXPECT_EQ(seqs[i], i);
    }
    EXPECT_TRUE(seqs_in(dir.path / "spool").empty());
}

TEST(Transport, CollectorDownKeepsEverythingSpooled)
{
    TempDir dir("distrace_tx_down");
    std::vector<Event> events;
    for (std::uint64_t i = 0; i < 10; ++i) {
        events.push_back(numbered(i));
    }
    const auto report = send_tcp(events, {"127.0.0.1", closed_port()}, {3, 5ms}, dir.path / "spool");
    EXPECT_TRUE(report.unreachable);
    EXPECT_EQ(report.sent, 0u);
    EXPECT_EQ(report.spooled, 10u);
    EXPECT_EQ(seqs_in(dir.path / "spool").size(), 10u);
}

TEST(Transport, LeftoverSpoolIsShippedFirst)
{
    TempDir dir("distrace_tx_resume");
    {
        std::vector<Event> first{numbered(0), numbered(1)};
        (void)send_tcp(first, {"127.0.0.1", closed_port()}, {2, 1ms}, dir.path / "spool");
    }
    Collector collector("127.0.0.1:0", dir.path / "out.ndjson");
    std::vector<Event> second{numbered(2)};
    const auto report = send_tcp(second, {"127.0.0.1", collector.port()}, kFast, dir.path / "spool");
    collector.stop();
    EXPECT_EQ(report.sent, 3u);
    EXPECT_EQ(seqs_in(dir.path / "out.ndjson"), (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Transport, CollectorRestartMidRunLosesNothing)
{
    TempDir dir("distrace_tx_restart");
    const auto out = dir.path / "out.ndjson";
    auto collector = std::make_unique<Collector>("127.0.0.1:0", out);
    const std::uint16_t port = collector->port();
    const std::string bind = "127.0.0.1:" + std::to_string(port);

    TcpSender sender({"127.0.0.1", port}, kFast, dir.path / "spool", {32});
    for (std::uint64_t i = 0; i < 1000; ++i) {
        sender.send(numbered(i));
        if (i == 400) {
            std::this_thread::sleep_for(50ms);
            collector.reset();  // abortive: in-flight batch is lost on the wire
            std::this_thread::sleep_for(150ms);
        }
        if (i == 600) {
            collector = std::make_unique<Collector>(bind, out);
        }
        if (i % 50 == 0) {
            std::this_thread::sleep_for(2ms);
        }
    }
    const auto report = sender.finish();
    collector.reset();

    std::set<std::uint64_t> seen;
    for (auto s : seqs_in(out)) {
        seen.insert(s);
    }
    for (auto s : seqs_in(dir.path / "spool")) {
        seen.insert(s);
    }
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_EQ(*seen.rbegin(), 999u);
    EXPECT_FALSE(report.unreachable);
    EXPECT_EQ(report.spooled, 0u);
}

TEST(Transport, ConcurrentSendersInterleaveWholeLines)
{
    TempDir dir("distrace_tx_concurrent");
    Collector collector("127.0.0.1:0", dir.path / "out.ndjson");
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            std::vector<Event> events;
            for (std::uint64_t i = 0; i < 200; ++i) {
                events.push_back(numbered(std::uint64_t(t) * 1000 + i));
            }
            (void)send_tcp(events, {"127.0.0.1", collector.port()}, kFast,
                           dir.path / ("spool" + std::to_string(t)), {50});
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    collector.stop();
    const auto seqs = seqs_in(dir.path / "out.ndjson");  // parse_event throws on torn lines
    EXPECT_EQ(seqs.size(), 800u);
    std::map<std::uint64_t, std::uint64_t> last;
    for (auto s : seqs) {
        const auto sender = s / 1000;
        if (last.count(sender)) {
            EXPECT_EQ(s, last[sender] + 1);
        }
        last[sender] = s;
    }
}

TEST(Collector, SkipsMalformedAndOversizeLines)
{
    TempDir dir("distrace_collector_bad");
    Collector collector("127.0.0.1:0", dir.path / "out.ndjson");
    const int fd = raw_connect(collector.port());
    ASSERT_GE(fd, 0);
    std::string payload = serialize_event(numbered(1)) + "\nnot json\n" + std::string(kMaxLineBytes + 10, 'x') +
                          "\n" + serialize_event(numbered(2)) + "\n";
    ASSERT_EQ(::send(fd, payload.data(), payload.size(), MSG_NOSIGNAL), ssize_t(payload.size()));
    finish_raw(fd);
    collector.stop();
    EXPECT_EQ(seqs_in(dir.path / "out.ndjson"), (std::vector<std::uint64_t>{1, 2}));
    EXPECT_EQ(collector.lines_rejected(), 2u);
}

TEST(Collector, EmptyConnectionsAreHarmless)
{
    TempDir dir("distrace_collector_empty");
    Collector collector("127.0.0.1:0", dir.path / "out.ndjson");
    for (int i = 0; i < 5; ++i) {
        const int fd = raw_connect(collector.port());
        ASSERT_GE(fd, 0);
        finish_raw(fd);
    }
    collector.stop();
    EXPECT_EQ(collector.lines_written(), 0u);
    EXPECT_EQ(std::filesystem::file_size(dir.path / "out.ndjson"), 0u);
}

TEST(Collector, BindFailureReported)
{
    Collector first("127.0.0.1:0", std::filesystem::temp_directory_path() / "distrace_bind_a.ndjson");
    try {
        Collector second("127.0.0.1:" + std::to_string(first.port()),
                         std::filesystem::temp_directory_path() / "distrace_bind_b.ndjson");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BindFailure);
    }
}
