#pragma once

// Serialization: diagnostic CSVs, field snapshots (CSV + 8-bit PGM heatmap
// with a sidecar scale file) and controller checkpoints.
//
// Checkpoint layout (all integers little-endian):
//   "VPCTL"                 5 bytes magic
//   u8  version             = 1
//   u8  kind                1 = time_independent, 2 = low_rank_operator
//   u32 shape_count         number of u32 shape entries that follow
//   u32 shape[shape_count]  time_independent: {coefficients}
//                           low_rank_operator: layer_dims
//   u64 value_count
//   f64 values[value_count] theta, or MLP parameters flattened per layer
//                           (W column-major, then b)

#include <filesystem>
#include <string>
#include <variant>

#include "vpctl/diagnostics.hpp"
#include "vpctl/grid.hpp"
#include "vpctl/mlp.hpp"

namespace vpctl::io {

inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint8_t { time_independent = 1, low_rank_operator = 2 };

void write_series_csv(const DiagnosticSeries& series, const std::filesystem::path& path);
DiagnosticSeries read_series_csv(const std::filesystem::path& path);

/// Writes `stem.csv` (row = first index, column = second index), `stem.pgm`
/// and `stem.scale.txt` ("min max" used for the 0..255 gray mapping).
void write_matrix_snapshot(const Matrix<double>& grid_values, const std::filesystem::path& stem);
Matrix<double> read_matrix_csv(const std::filesystem::path& path);

/// 1D distribution: rows = x index, columns = v index.
void write_field_snapshot(const DistributionField<double>& f, const std::filesystem::path& stem);
/// Spatial field component: 1D -> single column; 2D -> rows = x, columns = y.
void write_field_snapshot(const SpatialField<double>& field, const std::filesystem::path& stem, int component = 0);
/// 2D distribution: velocity slice f(x_i, y_j, ., .) at one spatial node (rows = v1, columns = v2).
void write_velocity_slice(const DistributionField<double>& f, int ix, int iy, const std::filesystem::path& stem);

void checkpoint_write(const std::filesystem::path& path, const Vector<double>& theta);
void checkpoint_write(const std::filesystem::path& path, const MlpParams<double>& params);

using Checkpoint = std::variant<Vector<double>, MlpParams<double>>;
Checkpoint checkpoint_read(const std::filesystem::path& path);
Vector<double> checkpoint_read_theta(const std::filesystem::path& path);
MlpParams<double> checkpoint_read_mlp(const std::filesystem::path& path);

}  // namespace vpctl::io
