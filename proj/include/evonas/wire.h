// Copyright 2026 The evonas Authors.
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

// Framed message protocol shared by models, brokers, workers and the
// nameserver.
//
// Frame := length:u32 (big endian) payload[length]
// payload is a UTF-8 JSON object with a string member "type". Keys are
// emitted sorted, so encoding is canonical. 1 <= length <= 16 MiB.
//
// Required members per type (all others optional, unknown members ignored):
//
//   submit_task        task_id sender_id genotype eval_config generation
//   task_request       sender_id
//   task_assignment    task_id lease_id genotype eval_config owned
//   no_task            -
//   task_result        task_id sender_id lease_id fitness loss
//                      [error error_message eval_ms worker_id]
//   heartbeat          sender_id lease_id [idle_workers clients]
//   heartbeat_ack      lease_id
//   reconnect          [lease_id reason]
//   register_broker    sender_id address
//   broker_list_request sender_id [requester]
//   broker_list        brokers: [{broker_id, address, clients}]
//   link_request       sender_id address
//   link_accept        sender_id
//   share_task         task_id sender_id genotype eval_config
//   reclaim_task       task_id sender_id fitness loss
//                      [error error_message eval_ms worker_id]
//
// eval_config := {kind, target, epochs, delay_ms, noise_sigma2, digest}

#ifndef EVONAS_WIRE_H_
#define EVONAS_WIRE_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evonas/fitness.h"

namespace evonas::wire {

inline constexpr std::size_t kMaxPayloadBytes = 16u << 20;
inline constexpr std::size_t kHeaderBytes = 4;

struct ProtocolTimeouts {
  std::chrono::milliseconds heartbeat_interval{2000};
  int heartbeat_misses_to_expire = 3;
  std::chrono::milliseconds request_timeout{5000};

  std::chrono::milliseconds expiry_window() const {
    return heartbeat_interval * heartbeat_misses_to_expire;
  }
};

enum class Requester { kWorker, kModel, kBroker };

struct SubmitTask {
  std::string task_id;
  std::string sender_id;
  std::string genotype;
  EvalConfig eval_config;
  std::int64_t generation = 0;
  friend bool operator==(const SubmitTask&, const SubmitTask&) = default;
};

struct TaskRequest {
  std::string sender_id;
  friend bool operator==(const TaskRequest&, const TaskRequest&) = default;
};

struct TaskAssignment {
  std::string task_id;
  std::string lease_id;
  std::string genotype;
  EvalConfig eval_config;
  bool owned = true;
  friend bool operator==(const TaskAssignment&, const TaskAssignment&) = default;
};

struct NoTask {
  friend bool operator==(const NoTask&, const NoTask&) = default;
};

struct TaskResult {
  std::string task_id;
  std::string sender_id;
  std::string lease_id;
  double fitness = 0.0;
  double loss = 0.0;
  bool error = false;
  std::string error_message;
  double eval_ms = 0.0;
  std::string worker_id;
  friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

struct Heartbeat {
  std::string sender_id;
  std::string lease_id;
  std::int64_t idle_workers = 0;
  std::int64_t clients = -1;  // -1: not reported
  friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

struct HeartbeatAck {
  std::string lease_id;
  friend bool operator==(const HeartbeatAck&, const HeartbeatAck&) = default;
};

struct Reconnect {
  std::string lease_id;
  std::string reason;
  friend bool operator==(const Reconnect&, const Reconnect&) = default;
};

struct RegisterBroker {
  std::string sender_id;
  std::string address;
  friend bool operator==(const RegisterBroker&, const RegisterBroker&) = default;
};

struct BrokerListRequest {
  std::string sender_id;
  Requester requester = Requester::kWorker;
  friend bool operator==(const BrokerListRequest&, const BrokerListRequest&) = default;
};

struct BrokerEntry {
  std::string broker_id;
  std::string address;
  std::int64_t clients = -1;
  friend bool operator==(const BrokerEntry&, const BrokerEntry&) = default;
};

struct BrokerList {
  std::vector<BrokerEntry> brokers;
  friend bool operator==(const BrokerList&, const BrokerList&) = default;
};

struct LinkRequest {
  std::string sender_id;
  std::string address;
  friend bool operator==(const LinkRequest&, const LinkRequest&) = default;
};

struct LinkAccept {
  std::string sender_id;
  friend bool operator==(const LinkAccept&, const LinkAccept&) = default;
};

struct ShareTask {
  std::string task_id;
  std::string sender_id;
  std::string genotype;
  EvalConfig eval_config;
  friend bool operator==(const ShareTask&, const ShareTask&) = default;
};

struct ReclaimTask {
  std::string task_id;
  std::string sender_id;
  double fitness = 0.0;
  double loss = 0.0;
  bool error = false;
  std::string error_message;
  double eval_ms = 0.0;
  std::string worker_id;
  friend bool operator==(const ReclaimTask&, const ReclaimTask&) = default;
};

using Message =
    std::variant<SubmitTask, TaskRequest, TaskAssignment, NoTask, TaskResult,
                 Heartbeat, HeartbeatAck, Reconnect, RegisterBroker,
                 BrokerListRequest, BrokerList, LinkRequest, LinkAccept,
                 ShareTask, ReclaimTask>;

// The "type" string for a message.
std::string_view type_name(const Message& m);

class WireError : public std::runtime_error {
 public:
  enum class Code {
    kTruncated,
    kBadEncoding,
    kUnknownType,
    kMissingField,
    kOversizedMessage,
  };

  WireError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::string to_json(const Message& m);
// Throws WireError(kBadEncoding / kUnknownType / kMissingField).
Message from_json(std::string_view payload);

// Throws WireError(kOversizedMessage, kBadEncoding).
std::vector<std::uint8_t> encode_frame(const Message& m);
// Exactly one frame. Throws WireError.
Message decode_frame(std::span<const std::uint8_t> bytes);

// Incremental decoder for a byte stream: feed arbitrary chunks, pop whole
// messages.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // nullopt until a full frame is buffered. Throws WireError on a bad frame;
  // the stream is unusable afterwards.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

}  // namespace evonas::wire

#endif  // EVONAS_WIRE_H_
