#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "esrl/coordinator.hpp"
#include "esrl/env.hpp"
#include "esrl/policy_spec.hpp"

namespace esrl {

// One training run's knobs. Text config files carry "key value" lines (an
// optional '=' between them is accepted); unknown keys are rejected.
struct RunConfig {
  Algorithm algorithm = Algorithm::Es;
  PolicyKind policy = PolicyKind::Mlp;
  std::string env = "deceptive-maze";
  int iterations = 200;
  int pop_pairs = 100;
  double sigma = 0.05;
  double lr = 0.01;
  double weight_decay = 0.005;
  int k = 10;
  int metapop_size = 5;
  double w = 0.5;
  double rtg_target = 0.008;
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = sequential in-process
  std::string pretrained;
  bool normalize_obs = false;
  std::vector<int> mlp_hidden = {16, 16};
  int dt_embed_dim = 16;
  int dt_heads = 1;
  int dt_layers = 1;
  int dt_context_len = 5;
  int dt_max_ep_len = 256;
  int eval_episodes = 10;
  int checkpoint_every = 50;
  std::uint64_t noise_len = 10000000;
  int straggler_ms = 60000;
  std::string archive_import;
  int max_steps = 200;
  int pretrain_episodes = 50;
  int pretrain_batch = 64;

  PolicySpec policy_spec() const {
    PolicySpec s;
    s.kind = policy;
    s.obs_dim = EnvSpec::kObsDim;
    s.act_dim = EnvSpec::kActDim;
    if (policy == PolicyKind::Mlp) {
      s.mlp_hidden = mlp_hidden;
    } else {
      s.dt_embed_dim = dt_embed_dim;
      s.dt_heads = dt_heads;
      s.dt_layers = dt_layers;
      s.dt_context_len = dt_context_len;
      s.dt_max_ep_len = dt_max_ep_len;
    }
    s.validate();
    return s;
  }

  EnvSpec env_spec() const {
    EnvSpec e = EnvSpec::by_id(env);
    e.max_steps = max_steps;
    e.validate();
    return e;
  }

  // Applies the cross-field rules, given which keys the user set explicitly:
  // the transformer quadruples the default population, plain ES carries a
  // single mean, and pretrained seeds force the reduced hyperparameters with
  // no observation normalization (overriding those is an error).
  void resolve(const std::set<std::string>& explicit_keys) {
    if (policy == PolicyKind::DecisionTransformer && !explicit_keys.contains("pop_pairs"))
      pop_pairs *= 4;
    if (algorithm == Algorithm::Es) metapop_size = 1;
    if (!pretrained.empty()) {
      if (explicit_keys.contains("sigma") && sigma != 0.01)
        throw ValidationError("pretrained runs fix sigma = 0.01; remove the override");
      if (explicit_keys.contains("lr") && lr != 0.01)
        throw ValidationError("pretrained runs fix lr = 0.01; remove the override");
      if (explicit_keys.contains("normalize_obs") && normalize_obs)
        throw ValidationError("pretrained runs disable observation normalization");
      sigma = 0.01;
      lr = 0.01;
      normalize_obs = false;
    }
    validate();
  }

  void validate() const {
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (pop_pairs < 1) throw ValidationError("pop_pairs must be >= 1");
    if (sigma <= 0 || lr <= 0) throw ValidationError("sigma and lr must be positive");
    if (weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
    if (k < 1) throw ValidationError("k must be >= 1");
    if (metapop_size < 1) throw ValidationError("metapop_size must be >= 1");
    if (w < 0 || w > 1) throw ValidationError("w must lie in [0,1]");
    if (workers < 0) throw ValidationError("workers must be >= 0");
    if (eval_episodes < 1) throw ValidationError("eval_episodes must be >= 1");
    if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
    if (straggler_ms < 1) throw ValidationError("straggler_ms must be >= 1");
    if (pretrain_episodes < 1 || pretrain_batch < 1)
      throw ValidationError("pretrain settings must be >= 1");
    const PolicySpec ps = policy_spec();
    (void)env_spec();
    if (policy == PolicyKind::DecisionTransformer && dt_max_ep_len < max_steps)
      throw ValidationError("dt_max_ep_len must cover max_steps");
    if (noise_len < ps.param_count() + 1)
      throw ValidationError("noise_len must exceed the genome length");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "algorithm " << to_string(algorithm) << "\n";
    os << "policy " << (policy == PolicyKind::Mlp ? "ff" : "dt") << "\n";
    os << "env " << env << "\n";
    os << "iterations " << iterations << "\n";
    os << "pop_pairs " << pop_pairs << "\n";
    os << "sigma " << format_double(sigma) << "\n";
    os << "lr " << format_double(lr) << "\n";
    os << "weight_decay " << format_double(weight_decay) << "\n";
    os << "k " << k << "\n";
    os << "metapop_size " << metapop_size << "\n";
    os << "w " << format_double(w) << "\n";
    os << "rtg_target " << format_double(rtg_target) << "\n";
    os << "seed " << seed << "\n";
    os << "workers " << workers << "\n";
    if (!pretrained.empty()) os << "pretrained " << pretrained << "\n";
    os << "normalize_obs " << (normalize_obs ? "true" : "false") << "\n";
    os << "mlp_hidden ";
    for (std::size_t i = 0; i < mlp_hidden.size(); ++i)
      os << (i ? "," : "") << mlp_hidden[i];
    os << "\n";
    os << "dt_embed_dim " << dt_embed_dim << "\n";
    os << "dt_heads " << dt_heads << "\n";
    os << "dt_layers " << dt_layers << "\n";
    os << "dt_context_len " << dt_context_len << "\n";
    os << "dt_max_ep_len " << dt_max_ep_len << "\n";
    os << "eval_episodes " << eval_episodes << "\n";
    os << "checkpoint_every " << checkpoint_every << "\n";
    os << "noise_len " << noise_len << "\n";
    os << "straggler_ms " << straggler_ms << "\n";
    if (!archive_import.empty()) os << "archive_import " << archive_import << "\n";
    os << "max_steps " << max_steps << "\n";
    os << "pretrain_episodes " << pretrain_episodes << "\n";
    os << "pretrain_batch " << pretrain_batch << "\n";
    return os.str();
  }

  // Parses without resolving; `explicit_keys` reports what the text set.
  static RunConfig parse(const std::string& text, std::set<std::string>& explicit_keys) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::string key;
      if (!(ls >> key)) continue;
      std::string value;
      ls >> value;
      if (value == "=") ls >> value;
      std::string extra;
      while (ls >> extra) value += " " + extra;
      if (value.empty())
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": missing value for '" + key + "'");
      cfg.set_field(key, value);
      explicit_keys.insert(key);
    }
    return cfg;
  }

  static RunConfig load(const std::string& path, std::set<std::string>* keys_out = nullptr,
                        bool resolve_now = true) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::set<std::string> keys;
    RunConfig cfg = parse(buf.str(), keys);
    if (keys_out) *keys_out = keys;
    if (resolve_now) cfg.resolve(keys);
    return cfg;
  }

  void set_field(const std::string& key, const std::string& value) {
    auto as_bool = [&value, &key]() {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ValidationError("bad boolean for '" + key + "': " + value);
    };
    if (key == "algorithm") {
      algorithm = algorithm_from_string(value);
    } else if (key == "policy") {
      if (value == "ff") policy = PolicyKind::Mlp;
      else if (value == "dt") policy = PolicyKind::DecisionTransformer;
      else throw ValidationError("policy must be 'ff' or 'dt'");
    } else if (key == "env") {
      env = value;
    } else if (key == "iterations") {
      iterations = static_cast<int>(parse_int(value));
    } else if (key == "pop_pairs") {
      pop_pairs = static_cast<int>(parse_int(value));
    } else if (key == "sigma") {
      sigma = parse_double(value);
    } else if (key == "lr") {
      lr = parse_double(value);
    } else if (key == "weight_decay") {
      weight_decay = parse_double(value);
    } else if (key == "k") {
      k = static_cast<int>(parse_int(value));
    } else if (key == "metapop_size") {
      metapop_size = static_cast<int>(parse_int(value));
    } else if (key == "w") {
      w = parse_double(value);
    } else if (key == "rtg_target") {
      rtg_target = parse_double(value);
    } else if (key == "seed") {
      seed = static_cast<std::uint64_t>(parse_int(value));
    } else if (key == "workers") {
      workers = static_cast<int>(parse_int(value));
    } else if (key == "pretrained") {
      pretrained = value;
    } else if (key == "normalize_obs") {
      normalize_obs = as_bool();
    } else if (key == "mlp_hidden") {
      mlp_hidden.clear();
      std::string item;
      std::string v = value;
      for (auto& c : v)
        if (c == ',') c = ' ';
      std::istringstream vs(v);
      while (vs >> item) mlp_hidden.push_back(static_cast<int>(parse_int(item)));
    } else if (key == "dt_embed_dim") {
      dt_embed_dim = static_cast<int>(parse_int(value));
    } else if (key == "dt_heads") {
      dt_heads = static_cast<int>(parse_int(value));
    } else if (key == "dt_layers") {
      dt_layers = static_cast<int>(parse_int(value));
    } else if (key == "dt_context_len") {
      dt_context_len = static_cast<int>(parse_int(value));
    } else if (key == "dt_max_ep_len") {
      dt_max_ep_len = static_cast<int>(parse_int(value));
    } else if (key == "eval_episodes") {
      eval_episodes = static_cast<int>(parse_int(value));
    } else if (key == "checkpoint_every") {
      checkpoint_every = static_cast<int>(parse_int(value));
    } else if (key == "noise_len") {
      noise_len = static_cast<std::uint64_t>(parse_int(value));
    } else if (key == "straggler_ms") {
      straggler_ms = static_cast<int>(parse_int(value));
    } else if (key == "archive_import") {
      archive_import = value;
    } else if (key == "max_steps") {
      max_steps = static_cast<int>(parse_int(value));
    } else if (key == "pretrain_episodes") {
      pretrain_episodes = static_cast<int>(parse_int(value));
    } else if (key == "pretrain_batch") {
      pretrain_batch = static_cast<int>(parse_int(value));
    } else {
      throw ValidationError("unknown config key: '" + key + "'");
    }
  }
};

}  // namespace esrl
