#pragma once

#include <filesystem>

#include "mpgemmfi/types.hpp"

// Matrix files, dispatched on extension:
//   .bin  two little-endian uint32 (rows, cols) then rows*cols binary32
//         values in column-major order
//   .csv  one matrix row per line, fields printed with %.9g, which
//         round-trips every binary32 value
// Anything else is rejected.  Errors carry the offending path.

namespace mpgemmfi {

Matrix32 load_matrix(const std::filesystem::path& path);
void save_matrix(const std::filesystem::path& path, const Matrix32& m);

}  // namespace mpgemmfi
