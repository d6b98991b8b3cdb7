#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <list>
#include <mutex>
#include <span>
#include <string>
#include <thread>

#include "distrace/events.hpp"

namespace distrace {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    /// "host:port"; throws InvalidArgument when malformed.
    static Endpoint parse(const std::string& text);
    std::string to_string() const;
};

struct RetryPolicy {
    unsigned retry_max = 5;  // connection attempts per cycle
    std::chrono::milliseconds backoff{100};  // doubled after every failed attempt
};

struct SenderOptions {
    /// Lines sent on one connection before it is closed and confirmed.
    std::size_t checkpoint_every = 256;
    std::chrono::milliseconds confirm_timeout{5000};
};

struct DeliveryReport {
    std::size_t sent = 0;       // confirmed delivered
    std::size_t respooled = 0;  // lines requeued after a broken connection
    std::size_t spooled = 0;    // still in the spool file after finish()
    bool unreachable = false;   // EndpointUnreachable: retries exhausted with lines left over
};

/// At-least-once NDJSON shipper.
///
/// Every line is first appended to the spool file, then written to a
/// persistent TCP connection by a background thread in submission order.
/// The wire carries no acknowledgements, so a batch counts as delivered only
/// when the sender half-closes the connection and the collector answers with
/// its own orderly close after draining it; the spool is then truncated to
/// what is still unconfirmed. A broken connection requeues the whole
/// unconfirmed batch, which can produce duplicates but never gaps. Spool
/// contents left by an earlier process are sent first.
class TcpSender {
public:
    TcpSender(Endpoint endpoint, RetryPolicy policy, std::filesystem::path spool_path, SenderOptions options = {});
    ~TcpSender();

    TcpSender(const TcpSender&) = delete;
    TcpSender& operator=(const TcpSender&) = delete;

    void send(std::string line);
    void send(const Event& event) { send(serialize_event(event)); }

    /// Flushes everything (one final connection cycle if needed) and stops the worker.
    DeliveryReport finish();

private:
    void run();
    bool connect_cycle();
    bool try_connect();
    bool peer_closed();
    bool write_pending();
    bool checkpoint();
    void drop_connection();
    void persist_spool();
    void append_spool(const std::string& line);

    Endpoint endpoint_;
    RetryPolicy policy_;
    std::filesystem::path spool_path_;
    SenderOptions options_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> incoming_;
    bool finishing_ = false;
    bool finished_ = false;

    // worker-owned
    std::deque<std::string> pending_;
    std::size_t inflight_ = 0;
    int fd_ = -1;
    DeliveryReport report_;
    std::thread worker_;
};

/// Convenience wrapper: ships `events` and waits for the final report.
DeliveryReport send_tcp(std::span<const Event> events, const Endpoint& endpoint, const RetryPolicy& policy,
                        const std::filesystem::path& spool_path, SenderOptions options = {});

inline constexpr std::size_t kMaxLineBytes = 1 << 20;

/// TCP sink for NDJSON lines from any number of concurrent senders. Valid
/// JSON lines are appended whole to the output file; malformed or oversize
/// lines are logged and dropped without closing the connection.
class Collector {
public:
    Collector(const std::string& bind_address, std::filesystem::path out_path);
    ~Collector();

    Collector(const Collector&) = delete;
    Collector& operator=(const Collector&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    std::size_t lines_written() const noexcept { return lines_written_.load(); }
    std::size_t lines_rejected() const noexcept { return lines_rejected_.load(); }

    /// Abortive shutdown: open connections are reset, unread data is lost.
    void stop();

private:
    struct Connection {
        int fd = -1;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void serve(Connection& conn);
    void write_line(std::string_view line);

    std::filesystem::path out_path_;
    int listen_fd_ = -1;
    int out_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> lines_written_{0};
    std::atomic<std::size_t> lines_rejected_{0};
    std::mutex write_mutex_;
    std::mutex conn_mutex_;
    std::list<Connection> connections_;
    std::thread acceptor_;
};

/// Runs a collector until `stop` becomes true.
void serve_collector(const std::string& bind_address, const std::filesystem::path& out_path,
                     const std::atomic<bool>& stop);

}  // namespace distrace
