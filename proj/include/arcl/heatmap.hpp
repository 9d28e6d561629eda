// SPDX-License-Identifier: Apache-2.0
//
// Plain-text CSV grids and 8-bit binary PGM (P5) images of a Matrix.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "arcl/numkernel.hpp"

namespace arcl {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row per line, comma-separated, %.17g (round-trips every double).
void write_csv(std::ostream& out, const Matrix& m);
void write_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_csv(std::istream& in);
Matrix read_csv(const std::filesystem::path& path);

/// Linear min-max scaling to 0..255; a constant matrix maps to 0.
std::string to_pgm(const Matrix& m);
void write_pgm(const std::filesystem::path& path, const Matrix& m);

}  // namespace arcl
