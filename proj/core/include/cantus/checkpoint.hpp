// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <string_view>

#include "cantus/training.hpp"

namespace cantus {

/// Binary layout, all integers little-endian:
///   "CNTSCKPT" | u32 version | u64 step | u64 meta length | meta text |
///   u64 tensor count | tensors...
/// where meta is `key = value` lines (the TrainConfig plus `vocab`) and each
/// tensor is u64 name length | name | u64 rank | u64 dims... | f64 values.
/// Optimizer moments are stored as `adam.m.<param>` and `adam.v.<param>`.
std::string encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace cantus
