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

// Messages between agents and the coordinator, the in-process bus used by
// the simulator, and a newline-delimited JSON transport over TCP.

#ifndef RDV_COMMS_H_
#define RDV_COMMS_H_

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rdv/errors.h"

namespace rdv {

enum class MessageKind { kThetaUpdate, kFlag, kAck, kStateAnnounce };

std::string to_string(MessageKind kind);
MessageKind message_kind_from_string(const std::string& name);

struct Message {
  MessageKind kind = MessageKind::kThetaUpdate;
  int sender = 0;
  int step = 0;
  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
  std::map<int, double> alpha;
  double ts = 0.0;  // sim time at send
};

// One JSON object, no trailing newline. Doubles round-trip exactly.
std::string encode_message(const Message& message);
// Throws TransportError on malformed input or non-finite ThetaUpdate.
Message decode_message(const std::string& line);

struct BusStats {
  std::int64_t total_messages = 0;
  std::map<int, std::int64_t> messages_per_step;
  std::int64_t bytes_on_wire = 0;
  std::int64_t duplicates_dropped = 0;
};

class Bus {
 public:
  virtual ~Bus() = default;
  // Returns false when the message was dropped as a duplicate.
  virtual bool publish(const Message& message) = 0;
  // Pending messages deliverable at `step`, in (step, sender) order.
  // Consuming a ThetaUpdate clears the agent's flag.
  virtual std::vector<Message> poll(int agent, int step) = 0;
  virtual bool flag(int agent) const = 0;
  virtual BusStats stats() const = 0;
  virtual void close() = 0;
};

// Deterministic bus: publish() fans ThetaUpdates out to every registered
// agent (the sender included, so that parallel-mode conflicts resolve the
// same way everywhere) and sets their flags. Deduplicates by
// (sender, step). A message published at step k is deliverable from step
// k + delay_steps.
class InProcessBus final : public Bus {
 public:
  explicit InProcessBus(std::vector<int> agents, int delay_steps = 0);

  bool publish(const Message& message) override;
  std::vector<Message> poll(int agent, int step) override;
  bool flag(int agent) const override;
  BusStats stats() const override;
  void close() override;

  const std::vector<Message>& log() const { return log_; }

 private:
  mutable std::mutex mutex_;
  std::vector<int> agents_;
  int delay_steps_;
  bool closed_ = false;
  std::map<int, std::vector<Message>> queues_;
  std::map<int, bool> flags_;
  std::set<std::pair<int, int>> seen_;
  std::vector<Message> log_;
  BusStats stats_;
};

// Blocking newline-delimited stream over a connected TCP socket.
class LineSocket {
 public:
  LineSocket() = default;
  explicit LineSocket(int fd) : fd_(fd) {}
  ~LineSocket();
  LineSocket(LineSocket&& other) noexcept;
  LineSocket& operator=(LineSocket&& other) noexcept;
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  // Throws TransportError when the peer is gone.
  void send_line(const std::string& line);
  // nullopt on timeout; throws TransportError on EOF or error.
  std::optional<std::string> read_line(double timeout_s);
  void close();
  std::int64_t bytes_sent() const { return bytes_sent_; }
  std::int64_t bytes_received() const { return bytes_received_; }

 private:
  int fd_ = -1;
  std::string buffer_;
  std::int64_t bytes_sent_ = 0;
  std::int64_t bytes_received_ = 0;
};

struct RetryPolicy {
  int retries = 3;
  double delay_s = 0.5;
};

// Connects to host:port, retrying `retries` times after the first attempt.
// Throws TransportError when every attempt fails.
LineSocket connect_with_retry(const std::string& host, int port,
                              const RetryPolicy& policy = {});

class Listener {
 public:
  // port 0 picks a free port; see port().
  Listener(const std::string& host, int port);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  int port() const { return port_; }
  // nullopt on timeout.
  std::optional<LineSocket> accept(double timeout_s);

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace rdv

#endif  // RDV_COMMS_H_
