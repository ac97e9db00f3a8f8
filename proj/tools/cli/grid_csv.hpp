#pragma once

#include <mechreg/common.hpp>

#include <string>
#include <vector>

namespace mechreg::cli {

/// Labelled images on an H×W grid, one flattened image per row
/// (channel-major, row-major pixels).
struct GridImages {
  int height = 0;
  int width = 0;
  int channels = 1;
  Points images;
  std::vector<int> labels;
};

/// First non-comment line `H,W,channels`; then one image per line:
/// `label,v_0,…,v_{channels·H·W−1}`. Lines starting with '#' are skipped.
GridImages read_grid_csv(const std::string& path);

}  // namespace mechreg::cli
