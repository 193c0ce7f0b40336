#include "tuhr/telemetry_server.hpp"

#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <list>
#include <vector>

#include "tuhr/error.hpp"

namespace tuhr::telemetry {

namespace {

constexpr std::size_t kOutHighWater = 1 << 20;

struct Connection {
    net::Fd fd;
    IngestSession session;
    std::string in;
    std::string out;
    bool skipping = false;  // inside an over-long line
    bool closing = false;   // flush `out`, then close
    bool dead = false;
};

}  // namespace

TelemetryServer::TelemetryServer(ReadingSink& sink, ServerOptions options)
    : sink_(sink), options_(std::move(options))
{
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start()
{
    listener_ = net::listen_tcp(options_.host, options_.port);
    net::set_nonblocking(listener_.get());
    port_ = net::local_port(listener_.get());
    wake_.reset(::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC));
    if (!wake_.valid()) throw Error("IO_FAILURE", "eventfd failed");
    stopping_ = false;
    thread_ = std::thread([this] { run(); });
}

void TelemetryServer::stop()
{
    if (!thread_.joinable()) return;
    stopping_ = true;
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_.get(), &one, sizeof one);
    thread_.join();
    listener_.reset();
    wake_.reset();
}

ServerCounters TelemetryServer::counters() const
{
    return {connections_.load(), lines_.load(), accepted_.load(), duplicates_.load(), rejected_.load()};
}

void TelemetryServer::run()
{
    std::list<Connection> conns;
    std::vector<pollfd> fds;
    std::vector<Connection*> owners;

    auto flush = [](Connection& c) {
        while (!c.out.empty()) {
            const auto n = ::send(c.fd.get(), c.out.data(), c.out.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                if (errno != EAGAIN && errno != EWOULDBLOCK) c.dead = true;
                return;
            }
            c.out.erase(0, static_cast<std::size_t>(n));
        }
        if (c.closing) c.dead = true;
    };

    auto handle = [&](Connection& c, std::string_view line) {
        ++lines_;
        LineOutcome r;
        try {
            r = c.session.handle_line(line);
        } catch (const std::exception&) {
            // nothing durable happened, so no ack; the sensor will resend
            c.closing = true;
            return;
        }
        if (r.ack.ok)
            ++(r.ack.dup ? duplicates_ : accepted_);
        else
            ++rejected_;
        c.out += serialize_ack(r.ack);
    };

    auto consume = [&](Connection& c) {
        std::size_t start = 0;
        while (!c.closing) {
            const auto nl = c.in.find('\n', start);
            if (nl == std::string::npos) break;
            if (c.skipping)
                c.skipping = false;
            else
                handle(c, std::string_view(c.in).substr(start, nl - start));
            start = nl + 1;
        }
        c.in.erase(0, start);
        if (!c.skipping && c.in.size() > options_.max_line) {
            ++lines_;
            ++rejected_;
            c.out += serialize_ack(AckRecord::rejected(AckError::Parse));
            c.skipping = true;
        }
        if (c.skipping) c.in.clear();
    };

    while (!stopping_) {
        fds.clear();
        owners.clear();
        fds.push_back({wake_.get(), POLLIN, 0});
        fds.push_back({listener_.get(), POLLIN, 0});
        for (auto& c : conns) {
            short ev = 0;
            if (!c.closing && c.out.size() < kOutHighWater) ev |= POLLIN;
            if (!c.out.empty()) ev |= POLLOUT;
            fds.push_back({c.fd.get(), ev, 0});
            owners.push_back(&c);
        }
        const int r = ::poll(fds.data(), fds.size(), 1000);
        if (r < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (fds[1].revents & POLLIN) {
            for (;;) {
                const int cfd = ::accept4(listener_.get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
                if (cfd < 0) break;
                conns.push_back(Connection{net::Fd(cfd), IngestSession(sink_), {}, {}, false, false, false});
                ++connections_;
            }
        }
        for (std::size_t k = 0; k < owners.size(); ++k) {
            auto& c = *owners[k];
            const auto rev = fds[k + 2].revents;
            if (rev & POLLIN) {
                char buf[65536];
                const auto n = ::recv(c.fd.get(), buf, sizeof buf, 0);
                if (n > 0) {
                    c.in.append(buf, static_cast<std::size_t>(n));
                    consume(c);
                } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
                    c.closing = true;  // peer is gone; send what we owe and close
                }
            } else if (rev & (POLLERR | POLLHUP | POLLNVAL)) {
                c.dead = true;
            }
            if (!c.dead) flush(c);
        }
        conns.remove_if([](const Connection& c) { return c.dead; });
    }
}

}  // namespace tuhr::telemetry
