// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tokencal/feature_model.hpp"

namespace tokencal {

/// h rows of w comma-separated values, full round-trip precision.
void write_grid_csv(const std::filesystem::path& file, std::span<const double> values, Grid grid);

/// Min-max normalized 8-bit levels (row-major). A constant grid maps to 0.
std::vector<std::uint8_t> to_gray_levels(std::span<const double> values);

/// Binary PGM (P5), one pixel per grid cell.
void write_grid_pgm(const std::filesystem::path& file, std::span<const double> values, Grid grid);

}  // namespace tokencal
