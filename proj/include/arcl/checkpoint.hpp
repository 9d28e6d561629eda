// SPDX-License-Identifier: Apache-2.0
//
// Binary model checkpoint: "ARCLCKPT", u32 format version, the ModelConfig,
// then every tensor as (u64 rows, u64 cols, rows*cols little-endian f64).
// Round trips are exact.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "arcl/vit.hpp"

namespace arcl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace arcl
