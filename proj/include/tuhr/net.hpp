#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tuhr/time.hpp"

namespace tuhr::net {

/// Owning file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) noexcept : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(o.release()) {}
    Fd& operator=(Fd&& o) noexcept
    {
        if (this != &o) {
            reset();
            fd_ = o.release();
        }
        return *this;
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    int get() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept
    {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    void reset(int fd = -1) noexcept;

private:
    int fd_ = -1;
};

void set_nonblocking(int fd);

/// Listening TCP socket with SO_REUSEADDR. Throws IO_FAILURE naming the port.
Fd listen_tcp(const std::string& host, std::uint16_t port, int backlog = 1024);
std::uint16_t local_port(int fd);

/// Blocking connect. Throws CONNECTION_REFUSED.
Fd connect_tcp(const std::string& host, std::uint16_t port);

/// Writes everything or throws IO_FAILURE.
void send_all(int fd, std::string_view bytes);

/// Buffered reader of LF-terminated lines from a blocking socket.
class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}
    /// Next line without its LF; nullopt on timeout. Throws IO_FAILURE when
    /// the peer closes or the socket fails.
    std::optional<std::string> read_line(Millis timeout);
    /// True if a complete line is already buffered.
    bool has_line() const noexcept { return buf_.find('\n') != std::string::npos; }

private:
    int fd_;
    std::string buf_;
};

}  // namespace tuhr::net
