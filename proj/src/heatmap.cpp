// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tokencal/error.hpp"

namespace tokencal {

namespace {

void check_grid(std::span<const double> values, Grid grid) {
  if (values.size() != grid.size()) {
    throw Error(ErrorCode::kGridMismatch, "heatmap", "value count differs from grid size");
  }
}

}  // namespace

void write_grid_csv(const std::filesystem::path& file, std::span<const double> values, Grid grid) {
  check_grid(values, grid);
  std::ofstream out(file, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write csv");
  }
  out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      if (c > 0) out << ',';
      out << values[r * grid.cols + c];
    }
    out << '\n';
  }
}

std::vector<std::uint8_t> to_gray_levels(std::span<const double> values) {
  std::vector<std::uint8_t> levels(values.size(), 0);
  if (values.empty()) {
    return levels;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    return levels;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = (values[i] - *lo) / range;
    levels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  return levels;
}

void write_grid_pgm(const std::filesystem::path& file, std::span<const double> values, Grid grid) {
  check_grid(values, grid);
  const auto levels = to_gray_levels(values);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write pgm");
  }
  out << "P5\n" << grid.cols << ' ' << grid.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(levels.data()), static_cast<std::streamsize>(levels.size()));
}

}  // namespace tokencal
