#pragma once

#include <string>

#include "capsule_nlu/model.hpp"

namespace capsnlu {

// Checkpoint file (binary, little-endian):
//   magic "CNLM" | u32 version=1 | u32 J | J bytes JSON (config, vocab,
//   label schema) | u32 tensor count | per tensor: u16 name length, UTF-8
//   name, u8 rank, rank x u32 dims, row-major 32-bit floats.
// Loading validates magic, version and tensor-size arithmetic before any
// allocation and reports failures with the byte offset; a round trip is
// bitwise identical.
void save_checkpoint(CapsuleModel<float>& model, const std::string& path);
CapsuleModel<float> load_checkpoint(const std::string& path);

inline constexpr uint32_t kCheckpointVersion = 1;

}  // namespace capsnlu
