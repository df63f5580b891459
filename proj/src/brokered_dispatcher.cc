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

#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evonas/nameserver.h"
#include "evonas/random.h"
#include "evonas/search.h"

namespace evonas {

namespace {

constexpr std::chrono::milliseconds kConnectTimeout{1000};
constexpr std::chrono::milliseconds kReceiveSlice{100};

}  // namespace

BrokeredDispatcher::BrokeredDispatcher(BrokeredDispatcherConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.broker.has_value() == cfg_.nameserver.has_value()) {
    throw std::invalid_argument("dispatcher needs exactly one of a broker or a nameserver");
  }
  if (cfg_.model_id.empty()) cfg_.model_id = "model-" + make_uuid();
}

BrokeredDispatcher::~BrokeredDispatcher() {
  if (conn_) conn_->shutdown();
}

std::optional<net::Connection> BrokeredDispatcher::open_connection() {
  if (cfg_.broker) {
    try {
      return net::Connection::open(*cfg_.broker, kConnectTimeout);
    } catch (const net::NetError& e) {
      spdlog::warn("model: broker {} unreachable: {}", cfg_.broker->to_string(), e.what());
      return std::nullopt;
    }
  }
  try {
    for (const auto& b : query_nameserver(*cfg_.nameserver, cfg_.model_id,
                                          wire::Requester::kModel,
                                          cfg_.timeouts.request_timeout)) {
      try {
        return net::Connection::open(net::Endpoint::parse(b.address), kConnectTimeout);
      } catch (const std::exception& e) {
        spdlog::warn("model: broker {} unreachable: {}", b.address, e.what());
      }
    }
  } catch (const net::NetError& e) {
    spdlog::warn("model: nameserver lookup failed: {}", e.what());
  }
  return std::nullopt;
}

// Retries for one request timeout, which covers a broker restart.
net::Connection& BrokeredDispatcher::connection() {
  if (conn_) return *conn_;
  const auto deadline = net::Clock::now() + cfg_.timeouts.request_timeout;
  while (true) {
    if (auto c = open_connection()) {
      conn_.emplace(std::move(*c));
      return *conn_;
    }
    if (net::Clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  throw DispatchError("no broker reachable");
}

std::vector<EvaluationOutcome> BrokeredDispatcher::evaluate_batch(
    std::span<const PendingEvaluation> tasks, const EvalConfig& cfg, int generation) {
  std::vector<EvaluationOutcome> out(tasks.size());
  std::unordered_map<std::string, std::size_t> outstanding;
  std::vector<wire::SubmitTask> submits;
  submits.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    submits.push_back(wire::SubmitTask{make_uuid(), cfg_.model_id, tasks[i].genotype.key(), cfg,
                                       generation});
    outstanding.emplace(submits.back().task_id, i);
  }

  bool resubmitted = false;
  auto submit_outstanding = [&] {
    auto& conn = connection();
    for (const auto& s : submits) {
      if (outstanding.count(s.task_id)) conn.send(s);
    }
  };
  auto recover = [&](const std::string& why) {
    conn_.reset();
    if (resubmitted) throw DispatchError("broker connection lost again: " + why);
    resubmitted = true;
    ++resubmissions_;
    spdlog::warn("model: broker connection lost ({}); resubmitting {} tasks", why,
                 outstanding.size());
    try {
      submit_outstanding();
    } catch (const net::NetError& e) {
      conn_.reset();
      throw DispatchError(std::string("resubmission failed: ") + e.what());
    }
  };

  try {
    submit_outstanding();
  } catch (const net::NetError& e) {
    recover(e.what());
  }

  auto last_progress = net::Clock::now();
  while (!outstanding.empty()) {
    std::optional<wire::Message> m;
    try {
      m = conn_->receive(kReceiveSlice);
    } catch (const net::NetError& e) {
      recover(e.what());
      last_progress = net::Clock::now();
      continue;
    } catch (const wire::WireError& e) {
      recover(e.what());
      last_progress = net::Clock::now();
      continue;
    }
    if (!m) {
      if (net::Clock::now() - last_progress > cfg_.result_ceiling) {
        throw DispatchError(fmt::format("{} results still missing after {} ms",
                                        outstanding.size(), cfg_.result_ceiling.count()));
      }
      continue;
    }
    const auto* r = std::get_if<wire::TaskResult>(&*m);
    if (!r) continue;
    const auto it = outstanding.find(r->task_id);
    if (it == outstanding.end()) continue;  // duplicate or stale
    out[it->second] = EvaluationOutcome{r->fitness, r->loss, r->error};
    if (r->error) {
      spdlog::warn("model: task {} ({}) failed on {}: {}", r->task_id,
                   tasks[it->second].genotype.key(), r->worker_id, r->error_message);
    }
    outstanding.erase(it);
    last_progress = net::Clock::now();
  }
  return out;
}

}  // namespace evonas
