#include "distrace/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <iostream>

#include "distrace/error.hpp"

namespace distrace {

namespace {

using Clock = std::chrono::steady_clock;

bool send_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(std::size_t(n));
    }
    return true;
}

int poll_ms(std::chrono::milliseconds d)
{
    return int(std::clamp<std::int64_t>(d.count(), 0, 60'000));
}

void abortive_close(int fd)
{
    linger lg{1, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_LINGER, &lg, sizeof(lg));
    ::close(fd);
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw Error(ErrorCode::InvalidArgument, "endpoint must look like host:port, got '" + text + "'");
    }
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.size() > 2 && ep.host.front() == '[' && ep.host.back() == ']') {
        ep.host = ep.host.substr(1, ep.host.size() - 2);
    }
    const std::string port = text.substr(colon + 1);
    if (port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw Error(ErrorCode::InvalidArgument, "bad port in '" + text + "'");
    }
    const unsigned long value = std::stoul(port);
    if (value > 65535) {
        throw Error(ErrorCode::InvalidArgument, "port out of range in '" + text + "'");
    }
    ep.port = std::uint16_t(value);
    return ep;
}

std::string Endpoint::to_string() const
{
    return host + ":" + std::to_string(port);
}

// ---------------------------------------------------------------------------
// TcpSender

TcpSender::TcpSender(Endpoint endpoint, RetryPolicy policy, std::filesystem::path spool_path, SenderOptions options)
    : endpoint_(std::move(endpoint)), policy_(policy), spool_path_(std::move(spool_path)), options_(options)
{
    if (options_.checkpoint_every == 0) {
        options_.checkpoint_every = 1;
    }
    if (std::ifstream in(spool_path_); in) {
        for (std::string line; std::getline(in, line);) {
            if (!line.empty()) {
                pending_.push_back(std::move(line));
            }
        }
    }
    persist_spool();
    worker_ = std::thread([this] { run(); });
}

TcpSender::~TcpSender()
{
    finish();
}

void TcpSender::send(std::string line)
{
    {
        std::lock_guard lk(mutex_);
        if (finishing_) {
            throw Error(ErrorCode::IoFailure, "sender already finished");
        }
        incoming_.push_back(std::move(line));
    }
    cv_.notify_one();
}

DeliveryReport TcpSender::finish()
{
    {
        std::lock_guard lk(mutex_);
        if (finished_) {
            return report_;
        }
        finishing_ = true;
    }
    cv_.notify_one();
    if (worker_.joinable()) {
        worker_.join();
    }
    std::lock_guard lk(mutex_);
    finished_ = true;
    return report_;
}

void TcpSender::run()
{
    const auto cooldown = policy_.backoff * (1u << std::min(policy_.retry_max, 16u));
    auto next_attempt = Clock::now();
    unsigned final_failures = 0;

    while (true) {
        std::deque<std::string> fresh;
        bool fin = false;
        {
            std::unique_lock lk(mutex_);
            auto ready = [&] { return !incoming_.empty() || finishing_; };
            if (fd_ < 0 && !pending_.empty()) {
                cv_.wait_until(lk, next_attempt, ready);
            } else if (!(fd_ >= 0 && inflight_ < pending_.size())) {
                cv_.wait(lk, ready);
            }
            fresh.swap(incoming_);
            fin = finishing_;
        }
        for (auto& line : fresh) {
            append_spool(line);
            pending_.push_back(std::move(line));
        }

        if (pending_.empty()) {
            if (fin) {
                break;
            }
            continue;
        }
        auto give_up = [&] { return fin && ++final_failures > std::max(policy_.retry_max, 1u); };

        if (fd_ < 0) {
            if (!fin && Clock::now() < next_attempt) {
                continue;  // cooling down; new lines stay spooled
            }
            if (!connect_cycle()) {
                next_attempt = Clock::now() + cooldown;
                if (fin) {
                    report_.unreachable = true;
                    break;
                }
                continue;
            }
        }
        if (!write_pending()) {
            if (give_up()) {
                report_.unreachable = true;
                break;
            }
            continue;
        }
        if (inflight_ >= options_.checkpoint_every || (fin && inflight_ == pending_.size())) {
            if (!checkpoint() && give_up()) {
                report_.unreachable = true;
                break;
            }
        }
    }
    if (fd_ >= 0) {
        drop_connection();
    }
    report_.spooled = pending_.size();
}

bool TcpSender::connect_cycle()
{
    const unsigned attempts = std::max(policy_.retry_max, 1u);
    for (unsigned a = 0; a < attempts; ++a) {
        if (a > 0) {
            std::this_thread::sleep_for(policy_.backoff * (1u << std::min(a - 1, 16u)));
        }
        if (try_connect()) {
            return true;
        }
    }
    return false;
}

bool TcpSender::try_connect()
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(endpoint_.host.c_str(), std::to_string(endpoint_.port).c_str(), &hints, &res) != 0) {
        return false;
    }
    int fd = -1;
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) {
            continue;
        }
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            pollfd p{fd, POLLOUT, 0};
            if (::poll(&p, 1, 2000) == 1) {
                int err = 0;
                socklen_t len = sizeof(err);
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                rc = err == 0 ? 0 : -1;
            }
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            timeval tv{5, 0};
            ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
            break;
        }
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) {
        return false;
    }
    fd_ = fd;
    inflight_ = 0;
    return true;
}

bool TcpSender::peer_closed()
{
    pollfd p{fd_, POLLIN | POLLRDHUP, 0};
    if (::poll(&p, 1, 0) <= 0) {
        return false;
    }
    if (p.revents & (POLLERR | POLLHUP | POLLRDHUP)) {
        return true;
    }
    char buf[256];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), MSG_DONTWAIT);
    return n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR);
}

bool TcpSender::write_pending()
{
    // A collector that closed before we asked means the batch was not drained.
    if (peer_closed()) {
        drop_connection();
        return false;
    }
    while (inflight_ < pending_.size() && inflight_ < options_.checkpoint_every) {
        const std::string& line = pending_[inflight_];
        if (!send_all(fd_, line) || !send_all(fd_, "\n")) {
            drop_connection();
            return false;
        }
        ++inflight_;
    }
    return true;
}

bool TcpSender::checkpoint()
{
    if (::shutdown(fd_, SHUT_WR) != 0) {
        drop_connection();
        return false;
    }
    const auto deadline = Clock::now() + options_.confirm_timeout;
    char buf[256];
    while (true) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0) {
            drop_connection();
            return false;
        }
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, poll_ms(left));
        if (rc < 0 && errno == EINTR) {
            continue;
        }
        if (rc <= 0) {
            drop_connection();
            return false;
        }
        const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
        if (n == 0) {
            break;
        }
        if (n < 0 && errno != EINTR) {
            drop_connection();
            return false;
        }
    }
    ::close(fd_);
    fd_ = -1;
    report_.sent += inflight_;
    pending_.erase(pending_.begin(), pending_.begin() + std::ptrdiff_t(inflight_));
    inflight_ = 0;
    persist_spool();
    return true;
}

void TcpSender::drop_connection()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    report_.respooled += inflight_;
    inflight_ = 0;
}

void TcpSender::persist_spool()
{
    auto tmp = spool_path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& line : pending_) {
            out << line << '\n';
        }
        if (!out) {
            std::cerr << "distrace: cannot write spool " << tmp << '\n';
            return;
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, spool_path_, ec);
    if (ec) {
        std::cerr << "distrace: cannot replace spool " << spool_path_ << ": " << ec.message() << '\n';
    }
}

void TcpSender::append_spool(const std::string& line)
{
    std::ofstream out(spool_path_, std::ios::binary | std::ios::app);
    out << line << '\n';
    if (!out) {
        std::cerr << "distrace: cannot append to spool " << spool_path_ << '\n';
    }
}

DeliveryReport send_tcp(std::span<const Event> events, const Endpoint& endpoint, const RetryPolicy& policy,
                        const std::filesystem::path& spool_path, SenderOptions options)
{
    TcpSender sender(endpoint, policy, spool_path, options);
    for (const auto& e : events) {
        sender.send(e);
    }
    return sender.finish();
}

// ---------------------------------------------------------------------------
// Collector

Collector::Collector(const std::string& bind_address, std::filesystem::path out_path) : out_path_(std::move(out_path))
{
    const Endpoint ep = Endpoint::parse(bind_address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0) {
        throw Error(ErrorCode::BindFailure, "cannot resolve " + bind_address);
    }
    for (auto* ai = res; ai != nullptr && listen_fd_ < 0; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) {
            continue;
        }
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
            listen_fd_ = fd;
        } else {
            ::close(fd);
        }
    }
    ::freeaddrinfo(res);
    if (listen_fd_ < 0) {
        throw Error(ErrorCode::BindFailure, "cannot bind " + bind_address + ": " + std::strerror(errno));
    }
    sockaddr_storage addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                       : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);

    out_fd_ = ::open(out_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (out_fd_ < 0) {
        ::close(listen_fd_);
        throw Error(ErrorCode::IoFailure, "cannot open " + out_path_.string());
    }
    acceptor_ = std::thread([this] { accept_loop(); });
}

Collector::~Collector()
{
    stop();
}

void Collector::stop()
{
    if (stopping_.exchange(true)) {
        return;
    }
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    ::close(listen_fd_);
    std::lock_guard lk(conn_mutex_);
    for (auto& c : connections_) {
        if (c.thread.joinable()) {
            c.thread.join();
        }
    }
    connections_.clear();
    ::close(out_fd_);
}

void Collector::accept_loop()
{
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) {
            continue;
        }
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            continue;
        }
        std::lock_guard lk(conn_mutex_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            if (it->done) {
                it->thread.join();
                it = connections_.erase(it);
            } else {
                ++it;
            }
        }
        auto& conn = connections_.emplace_back();
        conn.fd = fd;
        conn.thread = std::thread([this, &conn] { serve(conn); });
    }
}

void Collector::serve(Connection& conn)
{
    std::string buffer;
    bool discarding = false;
    char chunk[64 * 1024];
    bool orderly = false;

    while (!stopping_) {
        pollfd p{conn.fd, POLLIN, 0};
        const int rc = ::poll(&p, 1, 50);
        if (rc == 0 || (rc < 0 && errno == EINTR)) {
            continue;
        }
        const ssize_t n = rc < 0 ? -1 : ::recv(conn.fd, chunk, sizeof(chunk), 0);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        if (n == 0) {
            if (!buffer.empty() && !discarding) {
                std::cerr << "distrace collector: dropped unterminated trailing line\n";
                ++lines_rejected_;
            }
            orderly = true;
            break;
        }
        buffer.append(chunk, std::size_t(n));

        std::size_t start = 0;
        for (auto nl = buffer.find('\n', start); nl != std::string::npos; nl = buffer.find('\n', start)) {
            std::string_view line(buffer.data() + start, nl - start);
            start = nl + 1;
            if (discarding) {
                discarding = false;
                continue;
            }
            if (!line.empty() && line.back() == '\r') {
                line.remove_suffix(1);
            }
            if (line.empty()) {
                continue;
            }
            if (line.size() > kMaxLineBytes) {
                std::cerr << "distrace collector: dropped line over " << kMaxLineBytes << " bytes\n";
                ++lines_rejected_;
            } else if (!nlohmann::json::accept(line)) {
                std::cerr << "distrace collector: dropped malformed line\n";
                ++lines_rejected_;
            } else {
                write_line(line);
            }
        }
        buffer.erase(0, start);
        if (!discarding && buffer.size() > kMaxLineBytes) {
            std::cerr << "distrace collector: dropped line over " << kMaxLineBytes << " bytes\n";
            ++lines_rejected_;
            discarding = true;
        }
        if (discarding) {
            buffer.clear();
        }
    }
    // An orderly close after end-of-stream is what tells the sender its batch
    // landed; any other exit resets the connection so it cannot be mistaken
    // for that confirmation.
    if (orderly) {
        ::close(conn.fd);
    } else {
        abortive_close(conn.fd);
    }
    conn.done = true;
}

void Collector::write_line(std::string_view line)
{
    std::string record(line);
    record.push_back('\n');
    std::lock_guard lk(write_mutex_);
    std::string_view rest = record;
    while (!rest.empty()) {
        const ssize_t n = ::write(out_fd_, rest.data(), rest.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            std::cerr << "distrace collector: write failed: " << std::strerror(errno) << '\n';
            return;
        }
        rest.remove_prefix(std::size_t(n));
    }
    ++lines_written_;
}

void serve_collector(const std::string& bind_address, const std::filesystem::path& out_path,
                     const std::atomic<bool>& stop)
{
    Collector collector(bind_address, out_path);
    std::cerr << "distrace collector listening on port " << collector.port() << '\n';
    while (!stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    collector.stop();
}

}  // namespace distrace
