#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "lulc/error.hpp"
#include "lulc/raster.hpp"

namespace lulc {

inline constexpr int kDefaultTile = 224;

/// Non-overlapping square tiling of a raster. Ragged right/bottom edges are
/// covered by padding that extract_tile fills by reflection.
struct TileGrid {
  Dims source;
  int tile = kDefaultTile;
  int rows = 0;
  int cols = 0;
  int pad_right = 0;
  int pad_bottom = 0;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
};

struct TileIndex {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const TileIndex&, const TileIndex&) = default;
};

TileGrid plan_grid(Dims dims, int tile = kDefaultTile);

/// Row-major enumeration of every tile index.
std::vector<TileIndex> grid_indices(const TileGrid& grid);

/// Maps a possibly out-of-range coordinate into [0, n) by mirror reflection
/// about the edge pixels (edge not repeated).
int reflect_index(int p, int n);

namespace detail {

inline void check_index(const TileGrid& grid, TileIndex idx) {
  if (idx.row < 0 || idx.row >= grid.rows || idx.col < 0 || idx.col >= grid.cols) {
    throw Error(ErrorKind::IndexOutOfGrid, "tile (" + std::to_string(idx.row) + "," +
                                               std::to_string(idx.col) + ") outside " +
                                               std::to_string(grid.rows) + "x" +
                                               std::to_string(grid.cols) + " grid");
  }
}

}  // namespace detail

/// Works for RgbRaster and Plane<T> payloads.
template <typename Payload>
Payload extract_tile(const Payload& source, const TileGrid& grid, TileIndex idx) {
  if (source.dims() != grid.source) {
    throw Error(ErrorKind::DimMismatch, "source dims do not match the grid plan");
  }
  detail::check_index(grid, idx);
  Payload out(grid.tile, grid.tile);
  const int x0 = idx.col * grid.tile;
  const int y0 = idx.row * grid.tile;
  const bool interior = x0 + grid.tile <= source.width() && y0 + grid.tile <= source.height();
  for (int y = 0; y < grid.tile; ++y) {
    const int sy = interior ? y0 + y : reflect_index(y0 + y, source.height());
    for (int x = 0; x < grid.tile; ++x) {
      const int sx = interior ? x0 + x : reflect_index(x0 + x, source.width());
      out.set(x, y, source.at(sx, sy));
    }
  }
  return out;
}

template <typename Payload>
std::map<TileIndex, Payload> extract_all(const Payload& source, const TileGrid& grid) {
  std::map<TileIndex, Payload> tiles;
  for (TileIndex idx : grid_indices(grid)) tiles.emplace(idx, extract_tile(source, grid, idx));
  return tiles;
}

/// Reassembles tiles in grid order and crops the padding away.
template <typename Payload>
Payload stitch(const std::map<TileIndex, Payload>& tiles, const TileGrid& grid) {
  for (const auto& [idx, tile] : tiles) {
    detail::check_index(grid, idx);
    if (tile.width() != grid.tile || tile.height() != grid.tile) {
      throw Error(ErrorKind::WrongTileDims,
                  "tile (" + std::to_string(idx.row) + "," + std::to_string(idx.col) + ") is " +
                      std::to_string(tile.width()) + "x" + std::to_string(tile.height()) +
                      ", expected " + std::to_string(grid.tile));
    }
  }
  if (tiles.size() != grid.count()) {
    for (TileIndex idx : grid_indices(grid)) {
      if (!tiles.contains(idx)) {
        throw Error(ErrorKind::MissingTile, "missing tile (" + std::to_string(idx.row) + "," +
                                                std::to_string(idx.col) + "); got " +
                                                std::to_string(tiles.size()) + " of " +
                                                std::to_string(grid.count()));
      }
    }
  }
  Payload out(grid.source.width, grid.source.height);
  for (const auto& [idx, tile] : tiles) {
    const int x0 = idx.col * grid.tile;
    const int y0 = idx.row * grid.tile;
    const int w = std::min(grid.tile, grid.source.width - x0);
    const int h = std::min(grid.tile, grid.source.height - y0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.set(x0 + x, y0 + y, tile.at(x, y));
    }
  }
  return out;
}

}  // namespace lulc
