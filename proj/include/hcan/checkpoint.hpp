#pragma once

#include <string>

#include "hcan/trainer.hpp"

namespace hcan {

// File layout: magic "HCAN1", u64 little-endian manifest byte length,
// UTF-8 JSON manifest, then a blob of 32-bit little-endian floats in
// manifest tensor order. Round-trip is bit-exact (params are float-
// quantized during training).
void save_checkpoint(const std::string& path, const TrainerState& state);
TrainerState load_checkpoint(const std::string& path);

}  // namespace hcan
