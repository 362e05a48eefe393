#include "steamcast/patch_grid.hpp"

#include <string>

namespace steamcast {

std::vector<std::pair<PatchIndex, Tensor>> decompose(const Tensor& field, int patch) {
    if (field.rank() != 2) throw DimensionError("decompose: expected [H,W] field");
    const int h = field.dim(0), w = field.dim(1);
    if (patch < 1 || h % patch != 0 || w % patch != 0)
        throw ConfigError("decompose: patch size " + std::to_string(patch) +
                          " does not divide field extents " + std::to_string(h) + "x" +
                          std::to_string(w));
    GridGeometry grid{h / patch, w / patch};
    std::vector<std::pair<PatchIndex, Tensor>> tiles;
    tiles.reserve(static_cast<std::size_t>(grid.count()));
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            Tensor tile({patch, patch});
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    tile.at(y, x) = field.at(r * patch + y, c * patch + x);
            tiles.emplace_back(grid.index_at(r, c), std::move(tile));
        }
    return tiles;
}

Tensor crop_patch(const Tensor& frames, const PatchIndex& idx, int patch) {
    if (frames.rank() != 3) throw DimensionError("crop_patch: expected [F,H,W] frames");
    const int f = frames.dim(0);
    Tensor out({f, patch, patch});
    for (int t = 0; t < f; ++t)
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x)
                out.at(t, y, x) = frames.at(t, idx.grid_row * patch + y, idx.grid_col * patch + x);
    return out;
}

std::vector<Tensor> decompose_frames(const Tensor& frames, int patch, GridGeometry* geom_out) {
    if (frames.rank() != 3) throw DimensionError("decompose_frames: expected [F,H,W]");
    const int h = frames.dim(1), w = frames.dim(2);
    if (patch < 1 || h % patch != 0 || w % patch != 0)
        throw ConfigError("decompose_frames: patch size does not divide field extents");
    GridGeometry grid{h / patch, w / patch};
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(grid.count()));
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) out.push_back(crop_patch(frames, grid.index_at(r, c), patch));
    if (geom_out) *geom_out = grid;
    return out;
}

namespace {
// Clockwise from north: (dr, dc) offsets after the center entry.
constexpr int kNeighborOffsets[8][2] = {{-1, 0}, {-1, 1}, {0, 1},  {1, 1},
                                        {1, 0},  {1, -1}, {0, -1}, {-1, -1}};
}  // namespace

ReferencePatchSet neighborhood(const PatchIndex& center, const GridGeometry& grid,
                               const std::vector<Tensor>& patch_history) {
    if (center.grid_row < 0 || center.grid_row >= grid.rows || center.grid_col < 0 ||
        center.grid_col >= grid.cols)
        throw BoundsError("neighborhood: center outside grid");
    if (static_cast<int>(patch_history.size()) != grid.count())
        throw DimensionError("neighborhood: one history tensor per grid cell required");
    ReferencePatchSet refs;
    refs.patches.reserve(9);
    refs.indices.reserve(9);
    refs.patches.push_back(patch_history[static_cast<std::size_t>(center.linear_id)]);
    refs.indices.push_back(center);
    for (const auto& off : kNeighborOffsets) {
        const int r = center.grid_row + off[0], c = center.grid_col + off[1];
        if (r < 0 || r >= grid.rows || c < 0 || c >= grid.cols) {
            refs.patches.push_back(patch_history[static_cast<std::size_t>(center.linear_id)]);
            refs.indices.push_back(center);
        } else {
            const PatchIndex idx = grid.index_at(r, c);
            refs.patches.push_back(patch_history[static_cast<std::size_t>(idx.linear_id)]);
            refs.indices.push_back(idx);
        }
    }
    return refs;
}

ReferencePatchSet full_grid_refs(const GridGeometry& grid,
                                 const std::vector<Tensor>& patch_history) {
    if (static_cast<int>(patch_history.size()) != grid.count())
        throw DimensionError("full_grid_refs: one history tensor per grid cell required");
    ReferencePatchSet refs;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const PatchIndex idx = grid.index_at(r, c);
            refs.patches.push_back(patch_history[static_cast<std::size_t>(idx.linear_id)]);
            refs.indices.push_back(idx);
        }
    return refs;
}

Tensor stitch(const std::vector<std::pair<PatchIndex, Tensor>>& tiles, const GridGeometry& grid) {
    if (tiles.empty()) throw AggregationError("stitch: no tiles");
    const Tensor& first = tiles.front().second;
    if (first.rank() != 3) throw DimensionError("stitch: tiles must be [M,patch,patch]");
    const int m = first.dim(0), patch = first.dim(1);
    Tensor out({m, grid.rows * patch, grid.cols * patch});
    std::vector<int> seen(static_cast<std::size_t>(grid.count()), 0);
    for (const auto& [idx, tile] : tiles) {
        if (idx.grid_row < 0 || idx.grid_row >= grid.rows || idx.grid_col < 0 ||
            idx.grid_col >= grid.cols)
            throw AggregationError("stitch: tile (" + std::to_string(idx.grid_row) + "," +
                                   std::to_string(idx.grid_col) + ") outside grid");
        if (tile.rank() != 3 || tile.dim(0) != m || tile.dim(1) != patch || tile.dim(2) != patch)
            throw DimensionError("stitch: tile shape mismatch");
        int& count = seen[static_cast<std::size_t>(idx.linear_id)];
        if (++count > 1)
            throw AggregationError("stitch: duplicate tile at (" + std::to_string(idx.grid_row) +
                                   "," + std::to_string(idx.grid_col) + ")");
        for (int t = 0; t < m; ++t)
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    out.at(t, idx.grid_row * patch + y, idx.grid_col * patch + x) = tile.at(t, y, x);
    }
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c)
            if (!seen[static_cast<std::size_t>(r * grid.cols + c)])
                throw AggregationError("stitch: missing tile at (" + std::to_string(r) + "," +
                                       std::to_string(c) + ")");
    return out;
}

}  // namespace steamcast
