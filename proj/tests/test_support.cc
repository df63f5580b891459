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

#include "test_support.h"

#include <stdexcept>

#include "evonas/genotype.h"

namespace testing_support {

using namespace evonas;

double ScriptedRandom::uniform01() {
  if (draws_.empty() || draws_.front().is_index) {
    throw std::logic_error("script expected a uniform01 draw");
  }
  const double v = draws_.front().u;
  draws_.pop_front();
  return v;
}

std::size_t ScriptedRandom::uniform_index(std::size_t n) {
  if (draws_.empty() || !draws_.front().is_index) {
    throw std::logic_error("script expected a uniform_index draw");
  }
  const std::size_t i = draws_.front().index;
  draws_.pop_front();
  if (i >= n) throw std::logic_error("scripted index out of range");
  return i;
}

std::string random_text(RandomSource& rng, std::size_t max_len) {
  // Includes quotes, escapes, control and multi-byte characters.
  static const std::vector<std::string> kPieces = {
      "a", "Z", "0", "-", ":", ",", " ", "\"", "\\", "/", "\n", "\t", "\x01", "é", "ß", "字", "🙂"};
  std::string s;
  const std::size_t n = rng.uniform_index(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += kPieces[rng.uniform_index(kPieces.size())];
  return s;
}

namespace {

double random_number(RandomSource& rng) {
  switch (rng.uniform_index(4)) {
    case 0: return 0.0;
    case 1: return rng.uniform01();
    case 2: return 1e6 * (rng.uniform01() - 0.5);
    default: return 1.0 / (0.1 + rng.uniform01());
  }
}

std::int64_t random_int(RandomSource& rng) {
  return static_cast<std::int64_t>(rng.uniform_index(2000000)) - 1000000;
}

EvalConfig random_eval_config(RandomSource& rng) {
  EvalConfig c;
  c.kind = static_cast<EvaluatorKind>(rng.uniform_index(3));
  c.target_key = random_genotype(rng, {}).key();
  c.epochs = 1 + static_cast<int>(rng.uniform_index(40));
  c.delay_ms = static_cast<int>(rng.uniform_index(5000));
  c.noise_sigma2 = 0.01 + rng.uniform01();
  return c;
}

std::string genotype_text(RandomSource& rng) { return random_genotype(rng, {}).key(); }

}  // namespace

wire::Message random_message(RandomSource& rng) {
  switch (rng.uniform_index(std::variant_size_v<wire::Message>)) {
    case 0:
      return wire::SubmitTask{make_uuid(), random_text(rng, 12), genotype_text(rng),
                              random_eval_config(rng), random_int(rng)};
    case 1: return wire::TaskRequest{random_text(rng, 12)};
    case 2:
      return wire::TaskAssignment{make_uuid(), make_uuid(), genotype_text(rng),
                                  random_eval_config(rng), rng.uniform01() < 0.5};
    case 3: return wire::NoTask{};
    case 4:
    {
      // A message only travels with the error flag.
      wire::TaskResult r{make_uuid(), random_text(rng, 8), make_uuid(), random_number(rng),
                         random_number(rng)};
      r.error = rng.uniform01() < 0.5;
      if (r.error) r.error_message = random_text(rng, 20);
      r.eval_ms = random_number(rng);
      r.worker_id = random_text(rng, 8);
      return r;
    }
    case 5:
      return wire::Heartbeat{random_text(rng, 8), make_uuid(),
                             static_cast<std::int64_t>(rng.uniform_index(1000)),
                             static_cast<std::int64_t>(rng.uniform_index(1001)) - 1};
    case 6: return wire::HeartbeatAck{random_text(rng, 36)};
    case 7: return wire::Reconnect{random_text(rng, 36), random_text(rng, 16)};
    case 8: return wire::RegisterBroker{random_text(rng, 8), "127.0.0.1:7100"};
    case 9:
      return wire::BrokerListRequest{random_text(rng, 8),
                                     static_cast<wire::Requester>(rng.uniform_index(3))};
    case 10: {
      wire::BrokerList l;
      const std::size_t n = rng.uniform_index(5);
      for (std::size_t i = 0; i < n; ++i) {
        l.brokers.push_back(
            {random_text(rng, 8), "10.0.0." + std::to_string(i) + ":9000", random_int(rng)});
      }
      return l;
    }
    case 11: return wire::LinkRequest{random_text(rng, 8), "localhost:7101"};
    case 12: return wire::LinkAccept{random_text(rng, 8)};
    case 13:
      return wire::ShareTask{make_uuid(), random_text(rng, 8), genotype_text(rng),
                             random_eval_config(rng)};
    default:
    {
      wire::ReclaimTask r{make_uuid(), random_text(rng, 8), random_number(rng),
                          random_number(rng)};
      r.error = rng.uniform01() < 0.5;
      if (r.error) r.error_message = random_text(rng, 20);
      r.eval_ms = random_number(rng);
      r.worker_id = random_text(rng, 8);
      return r;
    }
  }
}

}  // namespace testing_support
