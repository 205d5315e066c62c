#pragma once

// Gate checkpointing: a versioned canonical-JSON record carrying the encoder
// seed, MLP weights (row-major 64-bit floats), prototypes, and the sharpening
// hyperparameters. The JSON layer emits shortest-round-trip doubles and
// sorted keys, so save -> load -> save reproduces identical bytes and
// bit-identical parameters.

#include <cstdint>
#include <string>

#include "ppai/errors.hpp"
#include "ppai/jsonio.hpp"
#include "ppai/qagate.hpp"

namespace ppai::qagate {

inline constexpr const char* kGateFormat = "ppai-gate";
inline constexpr int kGateVersion = 1;

inline json gate_to_json(const Gate& g) {
  g.proj.validate();
  g.protos.validate();
  json j;
  j["format"] = kGateFormat;
  j["version"] = kGateVersion;
  j["d"] = g.encoder.dim();
  j["encoder_seed"] = g.encoder.seed();
  j["d_p"] = g.proj.out_dim;
  j["hidden"] = g.proj.hidden_dim;
  j["k"] = g.protos.k;
  j["alpha"] = g.alpha;
  j["top_p"] = g.top_p;
  j["w1"] = g.proj.w1;
  j["b1"] = g.proj.b1;
  j["w2"] = g.proj.w2;
  j["b2"] = g.proj.b2;
  j["prototypes"] = g.protos.data;
  return j;
}

inline Gate gate_from_json(const json& j, const std::string& origin = "gate checkpoint") {
  std::string format = require_string(j, "format", origin);
  require(format == kGateFormat, Errc::ParseError,
          origin + ": unexpected format '" + format + "'");
  std::int64_t version = require_int(j, "version", origin);
  require(version == kGateVersion, Errc::ParseError,
          origin + ": unsupported version " + std::to_string(version));

  int d = static_cast<int>(require_int(j, "d", origin));
  std::uint64_t encoder_seed = require_uint(j, "encoder_seed", origin);

  Gate g{HashEncoder(d, encoder_seed), {}, {}, 0.0, 0.0};
  g.proj.out_dim = static_cast<int>(require_int(j, "d_p", origin));
  g.proj.hidden_dim = static_cast<int>(require_int(j, "hidden", origin));
  g.proj.in_dim = d;
  g.protos.k = static_cast<int>(require_int(j, "k", origin));
  g.protos.dim = g.proj.out_dim;
  g.alpha = require_number(j, "alpha", origin);
  g.top_p = require_number(j, "top_p", origin);
  g.proj.w1 = require_double_array(j, "w1", origin);
  g.proj.b1 = require_double_array(j, "b1", origin);
  g.proj.w2 = require_double_array(j, "w2", origin);
  g.proj.b2 = require_double_array(j, "b2", origin);
  g.protos.data = require_double_array(j, "prototypes", origin);

  require(g.alpha > 0.0 && g.top_p > 0.0 && g.top_p <= 1.0, Errc::ParseError,
          origin + ": alpha/top_p out of range");
  g.proj.validate();
  g.protos.validate();
  return g;
}

inline void save_gate(const std::string& path, const Gate& g) {
  write_text_file(path, canonical_dump(gate_to_json(g)) + "\n");
}

inline Gate load_gate(const std::string& path) {
  return gate_from_json(load_json_file(path), path);
}

}  // namespace ppai::qagate
