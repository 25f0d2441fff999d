#include "spinesim/error.hpp"
#include "spinesim/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <set>
#include <thread>

namespace spinesim {

namespace {

bool write_all(int fd, std::string_view bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

struct RolloutServer::Impl {
  const RolloutService* service = nullptr;
  int listen_fd = -1;
  std::thread acceptor;
  std::mutex mu;
  std::condition_variable cv;
  std::set<int> client_fds;
  std::vector<std::thread> workers;
  bool stopping = false;
  bool started = false;

  void serve_client(int fd) {
    Connection conn(*service);
    FrameDecoder dec;
    char buf[65536];
    for (;;) {
      const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      dec.feed(buf, static_cast<std::size_t>(n));
      bool ok = true;
      while (auto frame = dec.next()) {
        if (!write_all(fd, encode_frame(conn.handle(*frame)))) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
      if (dec.failed()) {
        // The stream cannot be resynchronized after a bogus length; report and hang up.
        write_all(fd, encode_frame(error_message("frame_too_large",
                                                 "frame length " + std::to_string(dec.rejected_length()) +
                                                     " exceeds the 64 MiB cap")
                                       .dump()));
        break;
      }
    }
    {
      std::lock_guard lk(mu);
      client_fds.erase(fd);
    }
    ::close(fd);
  }

  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd, nullptr, nullptr);
      std::lock_guard lk(mu);
      if (stopping) {
        if (fd >= 0) ::close(fd);
        return;
      }
      if (fd < 0) {
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      client_fds.insert(fd);
      workers.emplace_back([this, fd] { serve_client(fd); });
    }
  }
};

RolloutServer::RolloutServer(const RolloutService& service, int port, const std::string& host)
    : impl_(std::make_unique<Impl>()) {
  if (port < 0 || port > 65535) io_error("invalid_port", "port must be in [0, 65535], got " + std::to_string(port));
  impl_->service = &service;
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    io_error("invalid_host", "cannot parse IPv4 address '" + host + "'");
  }
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) io_error("socket_failed", errno_text());
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 64) != 0) {
    const std::string why = errno_text();
    ::close(fd);
    io_error("bind_failed", "cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  impl_->listen_fd = fd;
}

RolloutServer::~RolloutServer() { stop(); }

void RolloutServer::start() {
  std::lock_guard lk(impl_->mu);
  if (impl_->started) return;
  impl_->started = true;
  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
}

void RolloutServer::stop() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lk(impl_->mu);
    if (impl_->stopping) return;
    impl_->stopping = true;
    if (impl_->listen_fd >= 0) ::shutdown(impl_->listen_fd, SHUT_RDWR);
    for (int fd : impl_->client_fds) ::shutdown(fd, SHUT_RDWR);
  }
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  {
    std::lock_guard lk(impl_->mu);
    workers.swap(impl_->workers);
  }
  for (auto& t : workers) t.join();
  if (impl_->listen_fd >= 0) ::close(impl_->listen_fd);
  impl_->listen_fd = -1;
  impl_->cv.notify_all();
}

void RolloutServer::wait() {
  std::unique_lock lk(impl_->mu);
  impl_->cv.wait(lk, [this] { return impl_->stopping; });
}

RolloutClient::RolloutClient(const std::string& host, int port) {
  if (port <= 0 || port > 65535) io_error("invalid_port", "port must be in [1, 65535], got " + std::to_string(port));
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    io_error("resolve_failed", "cannot resolve '" + host + "'");
  }
  for (addrinfo* p = res; p; p = p->ai_next) {
    const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) io_error("connect_failed", "cannot connect to " + host + ":" + std::to_string(port));
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

RolloutClient::~RolloutClient() {
  if (fd_ >= 0) ::close(fd_);
}

void RolloutClient::send_raw(std::string_view bytes) {
  if (!write_all(fd_, bytes)) io_error("connection_closed", "send failed: " + errno_text());
}

void RolloutClient::send_frame(std::string_view payload) { send_raw(encode_frame(payload)); }

std::string RolloutClient::read_frame() {
  char buf[65536];
  for (;;) {
    if (auto f = decoder_.next()) return std::move(*f);
    if (decoder_.failed()) io_error("frame_too_large", "server sent an oversized frame");
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) io_error("connection_closed", "server closed the connection");
    decoder_.feed(buf, static_cast<std::size_t>(n));
  }
}

std::string RolloutClient::request(std::string_view payload) {
  send_frame(payload);
  return read_frame();
}

nlohmann::json RolloutClient::request(const nlohmann::json& msg) {
  return nlohmann::json::parse(request(std::string_view(msg.dump())));
}

}  // namespace spinesim
