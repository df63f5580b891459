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

#include "evonas/wire.h"

#include <cmath>

#include <fmt/format.h>
#include "json.hpp"

namespace evonas::wire {
namespace {

using json = nlohmann::json;
using Code = WireError::Code;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw WireError(Code::kMissingField, fmt::format("missing field '{}'", key));
  }
  return *it;
}

[[noreturn]] void wrong_type(const char* key, const char* expected) {
  throw WireError(Code::kMissingField,
                  fmt::format("field '{}' must be {}", key, expected));
}

std::string get_string(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) wrong_type(key, "a string");
  return v.get<std::string>();
}

double get_number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) wrong_type(key, "a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer()) wrong_type(key, "an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_boolean()) wrong_type(key, "a boolean");
  return v.get<bool>();
}

// Optional members fall back to the default when absent; a present member
// of the wrong type is still an error.
std::string opt_string(const json& j, const char* key, std::string fallback = {}) {
  return j.contains(key) ? get_string(j, key) : fallback;
}
double opt_number(const json& j, const char* key, double fallback) {
  return j.contains(key) ? get_number(j, key) : fallback;
}
std::int64_t opt_integer(const json& j, const char* key, std::int64_t fallback) {
  return j.contains(key) ? get_integer(j, key) : fallback;
}
bool opt_bool(const json& j, const char* key, bool fallback) {
  return j.contains(key) ? get_bool(j, key) : fallback;
}

void check_finite(double v, const char* key) {
  if (!std::isfinite(v)) {
    throw WireError(Code::kBadEncoding, fmt::format("field '{}' is not finite", key));
  }
}

json config_to_json(const EvalConfig& c) {
  check_finite(c.noise_sigma2, "noise_sigma2");
  return json{{"kind", evaluator_name(c.kind)}, {"target", c.target_key},
              {"epochs", c.epochs},             {"delay_ms", c.delay_ms},
              {"noise_sigma2", c.noise_sigma2}, {"digest", c.digest()}};
}

EvalConfig config_from_json(const json& j) {
  if (!j.is_object()) wrong_type("eval_config", "an object");
  EvalConfig c;
  try {
    c.kind = evaluator_from_name(get_string(j, "kind"));
  } catch (const std::invalid_argument& e) {
    throw WireError(Code::kBadEncoding, e.what());
  }
  c.target_key = get_string(j, "target");
  c.epochs = static_cast<int>(get_integer(j, "epochs"));
  c.delay_ms = static_cast<int>(get_integer(j, "delay_ms"));
  c.noise_sigma2 = get_number(j, "noise_sigma2");
  if (j.contains("digest") && get_string(j, "digest") != c.digest()) {
    throw WireError(Code::kBadEncoding, "eval_config digest does not match its fields");
  }
  return c;
}

json result_fields(const std::string& task_id, const std::string& sender_id, double fitness,
                   double loss, bool error, const std::string& error_message,
                   double eval_ms, const std::string& worker_id) {
  check_finite(fitness, "fitness");
  check_finite(loss, "loss");
  check_finite(eval_ms, "eval_ms");
  json j{{"task_id", task_id}, {"sender_id", sender_id}, {"fitness", fitness},
         {"loss", loss},       {"eval_ms", eval_ms}};
  if (error) {
    j["error"] = true;
    j["error_message"] = error_message;
  }
  if (!worker_id.empty()) j["worker_id"] = worker_id;
  return j;
}

const char* requester_name(Requester r) {
  switch (r) {
    case Requester::kWorker: return "worker";
    case Requester::kModel: return "model";
    case Requester::kBroker: return "broker";
  }
  return "worker";
}

Requester requester_from_name(const std::string& s) {
  if (s == "worker") return Requester::kWorker;
  if (s == "model") return Requester::kModel;
  if (s == "broker") return Requester::kBroker;
  throw WireError(Code::kBadEncoding, fmt::format("unknown requester '{}'", s));
}

json body(const Message& m) {
  return std::visit(
      Overloaded{
          [](const SubmitTask& x) {
            return json{{"task_id", x.task_id},
                        {"sender_id", x.sender_id},
                        {"genotype", x.genotype},
                        {"eval_config", config_to_json(x.eval_config)},
                        {"generation", x.generation}};
          },
          [](const TaskRequest& x) { return json{{"sender_id", x.sender_id}}; },
          [](const TaskAssignment& x) {
            return json{{"task_id", x.task_id},
                        {"lease_id", x.lease_id},
                        {"genotype", x.genotype},
                        {"eval_config", config_to_json(x.eval_config)},
                        {"owned", x.owned}};
          },
          [](const NoTask&) { return json::object(); },
          [](const TaskResult& x) {
            json j = result_fields(x.task_id, x.sender_id, x.fitness, x.loss, x.error,
                                   x.error_message, x.eval_ms, x.worker_id);
            j["lease_id"] = x.lease_id;
            return j;
          },
          [](const Heartbeat& x) {
            json j{{"sender_id", x.sender_id}, {"lease_id", x.lease_id},
                   {"idle_workers", x.idle_workers}};
            if (x.clients >= 0) j["clients"] = x.clients;
            return j;
          },
          [](const HeartbeatAck& x) { return json{{"lease_id", x.lease_id}}; },
          [](const Reconnect& x) {
            return json{{"lease_id", x.lease_id}, {"reason", x.reason}};
          },
          [](const RegisterBroker& x) {
            return json{{"sender_id", x.sender_id}, {"address", x.address}};
          },
          [](const BrokerListRequest& x) {
            return json{{"sender_id", x.sender_id},
                        {"requester", requester_name(x.requester)}};
          },
          [](const BrokerList& x) {
            json arr = json::array();
            for (const auto& b : x.brokers) {
              arr.push_back(json{{"broker_id", b.broker_id},
                                 {"address", b.address},
                                 {"clients", b.clients}});
            }
            return json{{"brokers", std::move(arr)}};
          },
          [](const LinkRequest& x) {
            return json{{"sender_id", x.sender_id}, {"address", x.address}};
          },
          [](const LinkAccept& x) { return json{{"sender_id", x.sender_id}}; },
          [](const ShareTask& x) {
            return json{{"task_id", x.task_id},
                        {"sender_id", x.sender_id},
                        {"genotype", x.genotype},
                        {"eval_config", config_to_json(x.eval_config)}};
          },
          [](const ReclaimTask& x) {
            return result_fields(x.task_id, x.sender_id, x.fitness, x.loss, x.error,
                                 x.error_message, x.eval_ms, x.worker_id);
          },
      },
      m);
}

Message parse_body(const std::string& type, const json& j) {
  if (type == "submit_task") {
    return SubmitTask{get_string(j, "task_id"), get_string(j, "sender_id"),
                      get_string(j, "genotype"), config_from_json(field(j, "eval_config")),
                      get_integer(j, "generation")};
  }
  if (type == "task_request") return TaskRequest{get_string(j, "sender_id")};
  if (type == "task_assignment") {
    return TaskAssignment{get_string(j, "task_id"), get_string(j, "lease_id"),
                          get_string(j, "genotype"),
                          config_from_json(field(j, "eval_config")), get_bool(j, "owned")};
  }
  if (type == "no_task") return NoTask{};
  if (type == "task_result") {
    return TaskResult{get_string(j, "task_id"),     get_string(j, "sender_id"),
                      get_string(j, "lease_id"),    get_number(j, "fitness"),
                      get_number(j, "loss"),        opt_bool(j, "error", false),
                      opt_string(j, "error_message"), opt_number(j, "eval_ms", 0.0),
                      opt_string(j, "worker_id")};
  }
  if (type == "heartbeat") {
    return Heartbeat{get_string(j, "sender_id"), get_string(j, "lease_id"),
                     opt_integer(j, "idle_workers", 0), opt_integer(j, "clients", -1)};
  }
  if (type == "heartbeat_ack") return HeartbeatAck{get_string(j, "lease_id")};
  if (type == "reconnect") {
    return Reconnect{opt_string(j, "lease_id"), opt_string(j, "reason")};
  }
  if (type == "register_broker") {
    return RegisterBroker{get_string(j, "sender_id"), get_string(j, "address")};
  }
  if (type == "broker_list_request") {
    return BrokerListRequest{get_string(j, "sender_id"),
                             requester_from_name(opt_string(j, "requester", "worker"))};
  }
  if (type == "broker_list") {
    const json& arr = field(j, "brokers");
    if (!arr.is_array()) wrong_type("brokers", "an array");
    BrokerList list;
    for (const json& b : arr) {
      if (!b.is_object()) wrong_type("brokers[]", "an object");
      list.brokers.push_back(BrokerEntry{get_string(b, "broker_id"), get_string(b, "address"),
                                         opt_integer(b, "clients", -1)});
    }
    return list;
  }
  if (type == "link_request") {
    return LinkRequest{get_string(j, "sender_id"), get_string(j, "address")};
  }
  if (type == "link_accept") return LinkAccept{get_string(j, "sender_id")};
  if (type == "share_task") {
    return ShareTask{get_string(j, "task_id"), get_string(j, "sender_id"),
                     get_string(j, "genotype"), config_from_json(field(j, "eval_config"))};
  }
  if (type == "reclaim_task") {
    return ReclaimTask{get_string(j, "task_id"),     get_string(j, "sender_id"),
                       get_number(j, "fitness"),     get_number(j, "loss"),
                       opt_bool(j, "error", false),  opt_string(j, "error_message"),
                       opt_number(j, "eval_ms", 0.0), opt_string(j, "worker_id")};
  }
  throw WireError(Code::kUnknownType, fmt::format("unknown message type '{}'", type));
}

std::uint32_t read_length(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void check_length(std::uint32_t length) {
  if (length == 0) throw WireError(Code::kBadEncoding, "zero-length frame");
  if (length > kMaxPayloadBytes) {
    throw WireError(Code::kOversizedMessage,
                    fmt::format("frame of {} bytes exceeds {}", length, kMaxPayloadBytes));
  }
}

}  // namespace

std::string_view type_name(const Message& m) {
  static constexpr std::string_view kNames[] = {
      "submit_task",     "task_request",  "task_assignment",     "no_task",
      "task_result",     "heartbeat",     "heartbeat_ack",       "reconnect",
      "register_broker", "broker_list_request", "broker_list",   "link_request",
      "link_accept",     "share_task",    "reclaim_task"};
  static_assert(std::size(kNames) == std::variant_size_v<Message>);
  return kNames[m.index()];
}

std::string to_json(const Message& m) {
  json j = body(m);
  j["type"] = std::string(type_name(m));
  try {
    return j.dump();
  } catch (const json::type_error& e) {  // invalid UTF-8 in a string member
    throw WireError(Code::kBadEncoding, e.what());
  }
}

Message from_json(std::string_view payload) {
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw WireError(Code::kBadEncoding, e.what());
  }
  if (!j.is_object()) throw WireError(Code::kBadEncoding, "payload is not a JSON object");
  const auto type = get_string(j, "type");
  try {
    return parse_body(type, j);
  } catch (const json::exception& e) {  // e.g. integer out of int64 range
    throw WireError(Code::kMissingField, e.what());
  }
}

std::vector<std::uint8_t> encode_frame(const Message& m) {
  const std::string payload = to_json(m);
  if (payload.size() > kMaxPayloadBytes) {
    throw WireError(Code::kOversizedMessage,
                    fmt::format("payload of {} bytes exceeds {}", payload.size(),
                                kMaxPayloadBytes));
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> frame;
  frame.reserve(kHeaderBytes + n);
  frame.push_back(static_cast<std::uint8_t>(n >> 24));
  frame.push_back(static_cast<std::uint8_t>(n >> 16));
  frame.push_back(static_cast<std::uint8_t>(n >> 8));
  frame.push_back(static_cast<std::uint8_t>(n));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

Message decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw WireError(Code::kTruncated,
                    fmt::format("{} bytes is shorter than the frame header", bytes.size()));
  }
  const std::uint32_t length = read_length(bytes.data());
  check_length(length);
  if (bytes.size() < kHeaderBytes + length) {
    throw WireError(Code::kTruncated, fmt::format("frame declares {} bytes, {} present",
                                                  length, bytes.size() - kHeaderBytes));
  }
  if (bytes.size() > kHeaderBytes + length) {
    throw WireError(Code::kBadEncoding, "trailing bytes after frame");
  }
  return from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()) + kHeaderBytes,
                                    length));
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  if (buffered() < kHeaderBytes) return std::nullopt;
  const std::uint32_t length = read_length(buffer_.data() + offset_);
  check_length(length);
  if (buffered() < kHeaderBytes + length) return std::nullopt;
  const auto* start = reinterpret_cast<const char*>(buffer_.data() + offset_ + kHeaderBytes);
  offset_ += kHeaderBytes + length;
  Message m = from_json(std::string_view(start, length));
  // Compact once the consumed prefix dominates.
  if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  return m;
}

}  // namespace evonas::wire
