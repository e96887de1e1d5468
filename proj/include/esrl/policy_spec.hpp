#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "esrl/common.hpp"

namespace esrl {

enum class PolicyKind { Mlp, DecisionTransformer };

inline std::string to_string(PolicyKind k) {
  return k == PolicyKind::Mlp ? "mlp" : "dt";
}

inline PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "mlp") return PolicyKind::Mlp;
  if (s == "dt") return PolicyKind::DecisionTransformer;
  throw ValidationError("unknown policy kind: '" + std::string(s) + "'");
}

// Architecture description. Fixes a bijection between structured weights and
// the flat parameter vector (see docs/formats.md for the normative layout).
// Activation is tanh throughout.
struct PolicySpec {
  PolicyKind kind = PolicyKind::Mlp;
  int obs_dim = 0;
  int act_dim = 0;

  std::vector<int> mlp_hidden;  // may be empty: single affine layer

  int dt_embed_dim = 0;
  int dt_heads = 0;
  int dt_layers = 0;
  int dt_context_len = 0;  // K timesteps
  int dt_max_ep_len = 0;   // rows in the positional table

  void validate() const {
    if (obs_dim < 1 || act_dim < 1) throw ValidationError("policy dims must be >= 1");
    if (kind == PolicyKind::Mlp) {
      for (int h : mlp_hidden)
        if (h < 1) throw ValidationError("mlp hidden widths must be >= 1");
    } else {
      if (dt_embed_dim < 1 || dt_heads < 1 || dt_layers < 1 || dt_context_len < 1 ||
          dt_max_ep_len < 1)
        throw ValidationError("dt dims must be >= 1");
      if (dt_embed_dim % dt_heads != 0)
        throw ValidationError("dt_embed_dim must be divisible by dt_heads");
    }
  }

  // Closed-form count; cross-checked against the vectorizer in tests.
  std::size_t param_count() const {
    validate();
    if (kind == PolicyKind::Mlp) {
      std::size_t n = 0;
      int in = obs_dim;
      for (int h : mlp_hidden) {
        n += static_cast<std::size_t>(in + 1) * h;
        in = h;
      }
      n += static_cast<std::size_t>(in + 1) * act_dim;
      return n;
    }
    const std::size_t d = dt_embed_dim;
    const std::size_t embeds = (d * 1 + d) + (d * obs_dim + d) + (d * act_dim + d);
    const std::size_t positional = static_cast<std::size_t>(dt_max_ep_len) * d;
    // per block: two layer norms, q/k/v/proj projections, 4x-wide feed-forward
    const std::size_t block = 2 * d + 3 * (d * d + d) + (d * d + d) + 2 * d +
                              (4 * d * d + 4 * d) + (d * 4 * d + d);
    const std::size_t final_ln = 2 * d;
    const std::size_t decoder = static_cast<std::size_t>(act_dim) * d + act_dim;
    return embeds + positional + static_cast<std::size_t>(dt_layers) * block + final_ln +
           decoder;
  }

  bool operator==(const PolicySpec&) const = default;

  std::string to_text() const {
    std::ostringstream os;
    os << "kind " << to_string(kind) << "\n";
    os << "obs_dim " << obs_dim << "\n";
    os << "act_dim " << act_dim << "\n";
    if (kind == PolicyKind::Mlp) {
      os << "mlp_hidden";
      for (int h : mlp_hidden) os << " " << h;
      os << "\n";
    } else {
      os << "dt_embed_dim " << dt_embed_dim << "\n";
      os << "dt_heads " << dt_heads << "\n";
      os << "dt_layers " << dt_layers << "\n";
      os << "dt_context_len " << dt_context_len << "\n";
      os << "dt_max_ep_len " << dt_max_ep_len << "\n";
    }
    return os.str();
  }

  static PolicySpec from_text(const std::string& text) {
    PolicySpec spec;
    std::istringstream is(text);
    std::string line;
    bool saw_kind = false;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "kind") {
        std::string v;
        ls >> v;
        spec.kind = policy_kind_from_string(v);
        saw_kind = true;
      } else if (key == "obs_dim") {
        ls >> spec.obs_dim;
      } else if (key == "act_dim") {
        ls >> spec.act_dim;
      } else if (key == "mlp_hidden") {
        int h;
        while (ls >> h) spec.mlp_hidden.push_back(h);
      } else if (key == "dt_embed_dim") {
        ls >> spec.dt_embed_dim;
      } else if (key == "dt_heads") {
        ls >> spec.dt_heads;
      } else if (key == "dt_layers") {
        ls >> spec.dt_layers;
      } else if (key == "dt_context_len") {
        ls >> spec.dt_context_len;
      } else if (key == "dt_max_ep_len") {
        ls >> spec.dt_max_ep_len;
      } else {
        throw ValidationError("unknown policy spec key: '" + key + "'");
      }
    }
    if (!saw_kind) throw ValidationError("policy spec missing 'kind'");
    spec.validate();
    return spec;
  }
};

}  // namespace esrl
