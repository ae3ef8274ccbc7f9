#include "lulc/grid.hpp"

namespace lulc {

TileGrid plan_grid(Dims dims, int tile) {
  if (tile < 1) throw Error(ErrorKind::DimMismatch, "tile size must be >= 1");
  if (dims.width < 1 || dims.height < 1) {
    throw Error(ErrorKind::DimMismatch, "grid source dims must be >= 1");
  }
  TileGrid g;
  g.source = dims;
  g.tile = tile;
  g.cols = (dims.width + tile - 1) / tile;
  g.rows = (dims.height + tile - 1) / tile;
  g.pad_right = g.cols * tile - dims.width;
  g.pad_bottom = g.rows * tile - dims.height;
  return g;
}

std::vector<TileIndex> grid_indices(const TileGrid& grid) {
  std::vector<TileIndex> out;
  out.reserve(grid.count());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) out.push_back({r, c});
  }
  return out;
}

int reflect_index(int p, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = p % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

}  // namespace lulc
