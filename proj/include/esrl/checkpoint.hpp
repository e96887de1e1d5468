#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "esrl/common.hpp"
#include "esrl/es.hpp"
#include "esrl/normalizer.hpp"
#include "esrl/policy_spec.hpp"

namespace esrl {

// Checkpoint file: text header ("esrl-ckpt 1", policy spec and flags as
// key-value lines, closed by "end"), then the parameter vector as
// little-endian 64-bit floats, then optionally the Adam moments and step
// count in the same encoding. See docs/formats.md.

inline void write_f64_le(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline double read_f64_le(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw ValidationError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void write_vec_le(std::ostream& out, std::span<const double> v) {
  for (double x : v) write_f64_le(out, x);
}

inline Vec read_vec_le(std::istream& in, std::size_t n) {
  Vec v(n);
  for (auto& x : v) x = read_f64_le(in);
  return v;
}

struct AdamBlob {
  Vec m, v;
  std::int64_t t = 0;
};

struct Checkpoint {
  PolicySpec spec;
  Vec theta;
  bool pretrained = false;
  std::optional<AdamBlob> optimizer;
  std::optional<ObsNormalizer> normalizer;

  void save(const std::string& path) const {
    if (theta.size() != spec.param_count())
      throw StructuralError("checkpoint theta length does not match spec");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out << "esrl-ckpt 1\n";
    out << spec.to_text();
    out << "pretrained " << (pretrained ? 1 : 0) << "\n";
    out << "has_optimizer " << (optimizer ? 1 : 0) << "\n";
    out << "has_normalizer " << (normalizer ? 1 : 0) << "\n";
    if (normalizer) out << normalizer->to_text();
    out << "param_count " << theta.size() << "\n";
    out << "end\n";
    write_vec_le(out, theta);
    if (optimizer) {
      if (optimizer->m.size() != theta.size() || optimizer->v.size() != theta.size())
        throw StructuralError("optimizer moment length mismatch");
      write_vec_le(out, optimizer->m);
      write_vec_le(out, optimizer->v);
      write_f64_le(out, static_cast<double>(optimizer->t));
    }
    if (!out) throw ValidationError("write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "esrl-ckpt 1")
      throw ValidationError("not an esrl checkpoint (or unsupported version): " + path);
    Checkpoint ck;
    std::ostringstream spec_text;
    bool has_optimizer = false, has_normalizer = false;
    std::size_t param_count = 0;
    std::string norm_mean_line, norm_std_line;
    while (std::getline(in, line)) {
      if (line == "end") break;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "pretrained") {
        int v;
        ls >> v;
        ck.pretrained = v != 0;
      } else if (key == "has_optimizer") {
        int v;
        ls >> v;
        has_optimizer = v != 0;
      } else if (key == "has_normalizer") {
        int v;
        ls >> v;
        has_normalizer = v != 0;
      } else if (key == "norm_mean") {
        norm_mean_line = line;
      } else if (key == "norm_std") {
        norm_std_line = line;
      } else if (key == "param_count") {
        ls >> param_count;
      } else {
        spec_text << line << "\n";
      }
    }
    if (line != "end") throw ValidationError("checkpoint header missing 'end': " + path);
    ck.spec = PolicySpec::from_text(spec_text.str());
    if (param_count != ck.spec.param_count())
      throw ValidationError("checkpoint param_count does not match its spec");
    if (has_normalizer) {
      if (norm_mean_line.empty() || norm_std_line.empty())
        throw ValidationError("checkpoint normalizer lines missing");
      ck.normalizer = ObsNormalizer::from_text_lines(norm_mean_line, norm_std_line);
    }
    ck.theta = read_vec_le(in, param_count);
    if (has_optimizer) {
      AdamBlob a;
      a.m = read_vec_le(in, param_count);
      a.v = read_vec_le(in, param_count);
      a.t = static_cast<std::int64_t>(read_f64_le(in));
      ck.optimizer = std::move(a);
    }
    return ck;
  }
};

}  // namespace esrl
