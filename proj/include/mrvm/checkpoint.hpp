// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "mrvm/trainer.hpp"

namespace mrvm {

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'V', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic, u32 version, u64 index length, JSON index
/// (arrays with name, shape, dtype and byte offset, plus the run state),
/// then the raw little-endian float64 arrays. Writes atomically.
void save_checkpoint(const std::filesystem::path& path, const train::TrainState& state);

/// Throws DataError naming the problem for truncated, corrupted or
/// foreign files.
train::TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace mrvm
