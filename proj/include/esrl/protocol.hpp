#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "esrl/common.hpp"
#include "esrl/env.hpp"
#include "esrl/normalizer.hpp"
#include "esrl/novelty.hpp"
#include "esrl/policy_spec.hpp"

namespace esrl {

using json = nlohmann::json;

inline constexpr int kProtoVersion = 1;

// ---- framing: 4-byte big-endian payload length + UTF-8 payload ----

inline std::string encode_frame(const std::string& payload) {
  const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

inline std::uint32_t decode_frame_length(const unsigned char header[4]) {
  return (static_cast<std::uint32_t>(header[0]) << 24) |
         (static_cast<std::uint32_t>(header[1]) << 16) |
         (static_cast<std::uint32_t>(header[2]) << 8) |
         static_cast<std::uint32_t>(header[3]);
}

inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

// ---- base64 (standard alphabet, padded) ----

namespace b64 {

inline constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(const unsigned char* data, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  if (i + 1 == n) {
    const std::uint32_t v = data[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == n) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

inline std::vector<unsigned char> decode(std::string_view s) {
  if (s.size() % 4 != 0) throw ProtocolError("base64 length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = s[i + j];
      if (c == '=') {
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = decode_char(c);
        if (vals[j] < 0 || pad > 0) throw ProtocolError("bad base64 input");
      }
    }
    if (pad > 2 || (pad > 0 && i + 4 != s.size()))
      throw ProtocolError("bad base64 padding");
    const std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

}  // namespace b64

// Parameter vectors travel as base64 of their little-endian 64-bit image
// (the checkpoint float layout).
inline std::string theta_to_b64(std::span<const double> v) {
  std::vector<unsigned char> bytes(v.size() * 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int j = 0; j < 8; ++j)
      bytes[i * 8 + j] = static_cast<unsigned char>((bits >> (8 * j)) & 0xff);
  }
  return b64::encode(bytes.data(), bytes.size());
}

inline Vec b64_to_theta(std::string_view s) {
  const auto bytes = b64::decode(s);
  if (bytes.size() % 8 != 0) throw ProtocolError("theta payload not 8-byte aligned");
  Vec v(bytes.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j)
      bits |= static_cast<std::uint64_t>(bytes[i * 8 + j]) << (8 * j);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

// ---- message payloads ----

struct PairAssignment {
  int pair_id = 0;
  std::size_t noise_index = 0;
};

// One iteration's work order, broadcast by the coordinator.
struct TaskAnnouncement {
  std::string run_id;
  std::uint64_t run_seed = 0;
  std::int64_t iteration = 0;
  int member_index = 0;
  std::string theta_version;
  double sigma = 0.0;
  double rtg_target = 0.0;
  int archive_version = 0;
  std::string env_id;
  std::vector<PairAssignment> pairs;
};

// One worker's evaluation of one mirrored perturbation pair.
struct ResultReport {
  int pair_id = 0;
  std::size_t noise_index = 0;
  double fitness_pos = 0.0, fitness_neg = 0.0;
  BehaviorCharacteristic bc_pos, bc_neg;
  int steps_pos = 0, steps_neg = 0;
  int worker_id = 0;
};

// Static per-run facts a worker needs before the first iteration.
struct WorkerSetup {
  std::string run_id;
  std::uint64_t run_seed = 0;
  PolicySpec policy;
  EnvSpec env;
  std::uint64_t noise_seed = 0;
  std::size_t noise_len = 0;
  std::optional<ObsNormalizer> normalizer;
};

inline json env_to_json(const EnvSpec& e) {
  return json{{"id", e.id},           {"max_steps", e.max_steps},
              {"step_scale", e.step_scale}, {"reward_scale", e.reward_scale},
              {"goal_radius", e.goal_radius}, {"start_jitter", e.start_jitter}};
}

inline EnvSpec env_from_json(const json& j) {
  EnvSpec e = EnvSpec::by_id(j.at("id").get<std::string>());
  e.max_steps = j.at("max_steps").get<int>();
  e.step_scale = j.at("step_scale").get<double>();
  e.reward_scale = j.at("reward_scale").get<double>();
  e.goal_radius = j.at("goal_radius").get<double>();
  e.start_jitter = j.at("start_jitter").get<double>();
  e.validate();
  return e;
}

namespace msg {

inline void check(const json& m, const char* want_type) {
  if (!m.contains("type") || !m.contains("v")) throw ProtocolError("malformed message");
  if (m.at("v").get<int>() != kProtoVersion)
    throw ProtocolError("protocol version mismatch");
  if (m.at("type").get<std::string>() != want_type)
    throw ProtocolError(std::string("expected ") + want_type + " message, got " +
                        m.at("type").get<std::string>());
}

inline std::string type_of(const json& m) {
  if (!m.contains("type") || !m.contains("v")) throw ProtocolError("malformed message");
  if (m.at("v").get<int>() != kProtoVersion)
    throw ProtocolError("protocol version mismatch");
  return m.at("type").get<std::string>();
}

inline json hello() { return json{{"type", "HELLO"}, {"v", kProtoVersion}}; }

inline json hello_resend_mean(std::int64_t iteration) {
  return json{{"type", "HELLO"}, {"v", kProtoVersion}, {"resend_mean", iteration}};
}

inline json hello_reply(const WorkerSetup& s, int worker_id) {
  json j{{"type", "HELLO"},
         {"v", kProtoVersion},
         {"worker_id", worker_id},
         {"run_id", s.run_id},
         {"run_seed", s.run_seed},
         {"policy", s.policy.to_text()},
         {"env", env_to_json(s.env)},
         {"noise_seed", s.noise_seed},
         {"noise_len", s.noise_len}};
  if (s.normalizer) {
    j["norm_mean"] = s.normalizer->mean;
    j["norm_std"] = s.normalizer->std;
  }
  return j;
}

inline std::pair<WorkerSetup, int> parse_hello_reply(const json& m) {
  check(m, "HELLO");
  WorkerSetup s;
  s.run_id = m.at("run_id").get<std::string>();
  s.run_seed = m.at("run_seed").get<std::uint64_t>();
  s.policy = PolicySpec::from_text(m.at("policy").get<std::string>());
  s.env = env_from_json(m.at("env"));
  s.noise_seed = m.at("noise_seed").get<std::uint64_t>();
  s.noise_len = m.at("noise_len").get<std::size_t>();
  if (m.contains("norm_mean")) {
    ObsNormalizer n;
    n.mean = m.at("norm_mean").get<Vec>();
    n.std = m.at("norm_std").get<Vec>();
    n.frozen = true;
    s.normalizer = std::move(n);
  }
  return {std::move(s), m.at("worker_id").get<int>()};
}

inline json assign(const TaskAnnouncement& a, std::span<const PairAssignment> slice) {
  json pairs = json::array();
  for (const auto& p : slice) pairs.push_back(json::array({p.pair_id, p.noise_index}));
  return json{{"type", "ASSIGN"},       {"v", kProtoVersion},
              {"run_id", a.run_id},     {"iteration", a.iteration},
              {"member", a.member_index}, {"theta_version", a.theta_version},
              {"sigma", a.sigma},       {"rtg_target", a.rtg_target},
              {"archive_version", a.archive_version}, {"env", a.env_id},
              {"pairs", std::move(pairs)}};
}

inline TaskAnnouncement parse_assign(const json& m, std::uint64_t run_seed) {
  check(m, "ASSIGN");
  TaskAnnouncement a;
  a.run_id = m.at("run_id").get<std::string>();
  a.run_seed = run_seed;
  a.iteration = m.at("iteration").get<std::int64_t>();
  a.member_index = m.at("member").get<int>();
  a.theta_version = m.at("theta_version").get<std::string>();
  a.sigma = m.at("sigma").get<double>();
  a.rtg_target = m.at("rtg_target").get<double>();
  a.archive_version = m.at("archive_version").get<int>();
  a.env_id = m.at("env").get<std::string>();
  for (const auto& p : m.at("pairs"))
    a.pairs.push_back({p.at(0).get<int>(), p.at(1).get<std::size_t>()});
  return a;
}

inline json mean(const std::string& run_id, std::int64_t iteration,
                 const std::string& theta_version, std::span<const double> theta) {
  return json{{"type", "MEAN"},          {"v", kProtoVersion},
              {"run_id", run_id},        {"iteration", iteration},
              {"theta_version", theta_version}, {"theta_b64", theta_to_b64(theta)}};
}

inline json result(const std::string& run_id, std::int64_t iteration, int member,
                   const ResultReport& r) {
  return json{{"type", "RESULT"},
              {"v", kProtoVersion},
              {"run_id", run_id},
              {"iteration", iteration},
              {"member", member},
              {"pair_id", r.pair_id},
              {"noise_index", r.noise_index},
              {"fitness_pos", r.fitness_pos},
              {"fitness_neg", r.fitness_neg},
              {"bc_pos", json::array({r.bc_pos.x, r.bc_pos.y})},
              {"bc_neg", json::array({r.bc_neg.x, r.bc_neg.y})},
              {"steps_pos", r.steps_pos},
              {"steps_neg", r.steps_neg},
              {"worker_id", r.worker_id}};
}

inline ResultReport parse_result(const json& m) {
  check(m, "RESULT");
  ResultReport r;
  r.pair_id = m.at("pair_id").get<int>();
  r.noise_index = m.at("noise_index").get<std::size_t>();
  r.fitness_pos = m.at("fitness_pos").get<double>();
  r.fitness_neg = m.at("fitness_neg").get<double>();
  r.bc_pos = {m.at("bc_pos").at(0).get<double>(), m.at("bc_pos").at(1).get<double>()};
  r.bc_neg = {m.at("bc_neg").at(0).get<double>(), m.at("bc_neg").at(1).get<double>()};
  r.steps_pos = m.at("steps_pos").get<int>();
  r.steps_neg = m.at("steps_neg").get<int>();
  r.worker_id = m.at("worker_id").get<int>();
  return r;
}

inline json drop(const std::string& run_id, std::int64_t iteration,
                 const std::vector<int>& pair_ids) {
  return json{{"type", "DROP"},
              {"v", kProtoVersion},
              {"run_id", run_id},
              {"iteration", iteration},
              {"pair_ids", pair_ids}};
}

inline json shutdown() { return json{{"type", "SHUTDOWN"}, {"v", kProtoVersion}}; }

}  // namespace msg

}  // namespace esrl
