// Copyright 2026 The rdv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rdv/comms.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "json.hpp"

namespace rdv {
namespace {

using nlohmann::json;

std::string errno_text(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

bool message_less(const Message& a, const Message& b) {
  if (a.step != b.step) return a.step < b.step;
  return a.sender < b.sender;
}

}  // namespace

std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kThetaUpdate:
      return "ThetaUpdate";
    case MessageKind::kFlag:
      return "Flag";
    case MessageKind::kAck:
      return "Ack";
    case MessageKind::kStateAnnounce:
      return "StateAnnounce";
  }
  return "Unknown";
}

MessageKind message_kind_from_string(const std::string& name) {
  if (name == "ThetaUpdate") return MessageKind::kThetaUpdate;
  if (name == "Flag") return MessageKind::kFlag;
  if (name == "Ack") return MessageKind::kAck;
  if (name == "StateAnnounce") return MessageKind::kStateAnnounce;
  throw TransportError("unknown message kind '" + name + "'");
}

std::string encode_message(const Message& message) {
  json alpha = json::object();
  for (const auto& [agent, value] : message.alpha) {
    alpha[std::to_string(agent)] = value;
  }
  const json j = {
      {"kind", to_string(message.kind)},
      {"sender", message.sender},
      {"step", message.step},
      {"theta", {message.theta.x(), message.theta.y(), message.theta.z()}},
      {"alpha", alpha},
      {"ts", message.ts},
  };
  return j.dump();
}

Message decode_message(const std::string& line) {
  Message m;
  try {
    const json j = json::parse(line);
    m.kind = message_kind_from_string(j.at("kind").get<std::string>());
    m.sender = j.at("sender").get<int>();
    m.step = j.at("step").get<int>();
    const auto& theta = j.at("theta");
    if (!theta.is_array() || theta.size() != 3) {
      throw TransportError("theta must have 3 entries");
    }
    for (int i = 0; i < 3; ++i) m.theta(i) = theta.at(i).get<double>();
    for (const auto& [key, value] : j.at("alpha").items()) {
      m.alpha[std::stoi(key)] = value.get<double>();
    }
    m.ts = j.at("ts").get<double>();
  } catch (const TransportError&) {
    throw;
  } catch (const std::exception& e) {
    throw TransportError(std::string("malformed message: ") + e.what());
  }
  if (m.kind == MessageKind::kThetaUpdate) {
    bool finite = m.theta.allFinite();
    for (const auto& [agent, value] : m.alpha) finite &= std::isfinite(value);
    if (!finite) throw TransportError("ThetaUpdate payload is not finite");
  }
  return m;
}

InProcessBus::InProcessBus(std::vector<int> agents, int delay_steps)
    : agents_(std::move(agents)), delay_steps_(delay_steps) {
  if (delay_steps_ < 0) throw ConfigError("bus delay must be non-negative");
  for (int a : agents_) {
    queues_[a];
    flags_[a] = false;
  }
}

bool InProcessBus::publish(const Message& message) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (closed_) throw TransportError("publish on a closed bus");
  if (!seen_.insert({message.sender, message.step}).second) {
    ++stats_.duplicates_dropped;
    return false;
  }
  if (message.kind == MessageKind::kThetaUpdate &&
      !(message.theta.allFinite())) {
    throw TransportError("ThetaUpdate payload is not finite");
  }
  log_.push_back(message);
  ++stats_.total_messages;
  ++stats_.messages_per_step[message.step];
  for (int a : agents_) {
    queues_[a].push_back(message);
    if (message.kind == MessageKind::kThetaUpdate) flags_[a] = true;
  }
  return true;
}

std::vector<Message> InProcessBus::poll(int agent, int step) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<Message> out;
  auto it = queues_.find(agent);
  if (it == queues_.end()) return out;
  std::vector<Message> keep;
  for (Message& m : it->second) {
    if (m.step + delay_steps_ <= step) {
      out.push_back(std::move(m));
    } else {
      keep.push_back(std::move(m));
    }
  }
  it->second = std::move(keep);
  std::stable_sort(out.begin(), out.end(), message_less);
  const bool pending_update = std::any_of(
      it->second.begin(), it->second.end(), [](const Message& m) {
        return m.kind == MessageKind::kThetaUpdate;
      });
  if (!pending_update) flags_[agent] = false;
  return out;
}

bool InProcessBus::flag(int agent) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = flags_.find(agent);
  return it != flags_.end() && it->second;
}

BusStats InProcessBus::stats() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return stats_;
}

void InProcessBus::close() {
  std::lock_guard<std::mutex> lock(mutex_);
  closed_ = true;
}

LineSocket::~LineSocket() { close(); }

LineSocket::LineSocket(LineSocket&& other) noexcept
    : fd_(other.fd_),
      buffer_(std::move(other.buffer_)),
      bytes_sent_(other.bytes_sent_),
      bytes_received_(other.bytes_received_) {
  other.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    buffer_ = std::move(other.buffer_);
    bytes_sent_ = other.bytes_sent_;
    bytes_received_ = other.bytes_received_;
    other.fd_ = -1;
  }
  return *this;
}

void LineSocket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void LineSocket::send_line(const std::string& line) {
  if (fd_ < 0) throw TransportError("send on a closed socket");
  const std::string data = line + "\n";
  size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t r =
        ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("send"));
    }
    sent += static_cast<size_t>(r);
  }
  bytes_sent_ += static_cast<std::int64_t>(data.size());
}

std::optional<std::string> LineSocket::read_line(double timeout_s) {
  if (fd_ < 0) throw TransportError("read on a closed socket");
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_s);
  for (;;) {
    const size_t pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      bytes_received_ += static_cast<std::int64_t>(line.size() + 1);
      return line;
    }
    const double left = std::chrono::duration<double>(
                            deadline - std::chrono::steady_clock::now())
                            .count();
    if (left <= 0.0) return std::nullopt;
    pollfd pfd{fd_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(std::ceil(left * 1000.0)));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("poll"));
    }
    if (r == 0) continue;
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("recv"));
    }
    if (n == 0) throw TransportError("connection closed by peer");
    buffer_.append(chunk, static_cast<size_t>(n));
  }
}

LineSocket connect_with_retry(const std::string& host, int port,
                              const RetryPolicy& policy) {
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= policy.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(policy.delay_s));
    }
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    const int gai = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res);
    if (gai != 0) {
      last_error = std::string("resolve ") + host + ": " + gai_strerror(gai);
      continue;
    }
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
      const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) {
        last_error = errno_text("socket");
        continue;
      }
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        ::freeaddrinfo(res);
        return LineSocket(fd);
      }
      last_error = errno_text("connect");
      ::close(fd);
    }
    ::freeaddrinfo(res);
  }
  throw TransportError("cannot reach broker at " + host + ":" +
                       std::to_string(port) + " after " +
                       std::to_string(policy.retries + 1) +
                       " attempts (" + last_error + ")");
}

Listener::Listener(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(errno_text("socket"));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("invalid listen address '" + host + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(fd_, 16) != 0) {
    const std::string msg = errno_text("bind/listen");
    ::close(fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<LineSocket> Listener::accept(double timeout_s) {
  pollfd pfd{fd_, POLLIN, 0};
  const int r = ::poll(&pfd, 1, static_cast<int>(std::ceil(timeout_s * 1000.0)));
  if (r < 0) {
    if (errno == EINTR) return std::nullopt;
    throw TransportError(errno_text("poll"));
  }
  if (r == 0) return std::nullopt;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError(errno_text("accept"));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return LineSocket(fd);
}

}  // namespace rdv
