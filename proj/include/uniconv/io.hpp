#pragma once

#include <cstdint>
#include <string>

#include "uniconv/analysis.hpp"
#include "uniconv/model.hpp"

namespace uniconv {

struct ParsedConfig {
  ModelConfig model;
  std::uint64_t seed = 0;
  bool schedule_is_formula = false; // remembered for lossless re-emission
};

// Strict JSON config: unknown keys are rejected by name, all ModelConfig /
// RfaConfig invariants re-validated after parse. The rfa.schedule value is
// either the string "formula" (expands K_n = 2n+5) or an explicit kernel
// list.
ParsedConfig parse_config(const std::string &text);

// Inverse of parse_config: parse(emit(cfg)) == cfg.
std::string emit_config(const ParsedConfig &cfg);

ParsedConfig load_config_file(const std::string &path);

// Binary PPM (P6, maxval 255) -> (1,3,H,W) tensor scaled to [0,1], channel
// order R,G,B.
template <typename T> Tensor4<T> read_ppm(const std::string &path);

// Binary PGM (P5, maxval 255): header then exactly h*w payload bytes.
void write_pgm(const Image8 &img, const std::string &path);
Image8 read_pgm(const std::string &path);

// Weights container: magic "UCNW0001", u32 version, manifest of
// (name, shape, offset), then raw little-endian 32-bit floats. Offsets are
// relative to the data section and must tile it exactly.
inline constexpr char kWeightsMagic[8] = {'U', 'C', 'N', 'W', '0', '0', '0', '1'};
inline constexpr std::uint32_t kWeightsVersion = 1;

template <typename T> void save_weights(const Model<T> &m, const std::string &path);

// Loads into an already-built model; every manifest entry must match the
// model's parameter names and shapes (mismatches name the parameter).
template <typename T> void load_weights(Model<T> &m, const std::string &path);

} // namespace uniconv
