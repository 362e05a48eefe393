#pragma once

#include <utility>
#include <vector>

#include "steamcast/tensor.hpp"

namespace steamcast {

struct PatchIndex {
    int grid_row = 0;
    int grid_col = 0;
    int linear_id = 0;  // row-major: grid_row * patches_per_row + grid_col

    bool operator==(const PatchIndex&) const = default;
};

struct GridGeometry {
    int rows = 0;
    int cols = 0;
    int count() const { return rows * cols; }
    PatchIndex index_at(int r, int c) const { return {r, c, r * cols + c}; }
};

// Reference patch set for one target: patches[0] is the center, the rest
// follow clockwise from north. Each patch tensor is [N,patch,patch].
struct ReferencePatchSet {
    std::vector<Tensor> patches;
    std::vector<PatchIndex> indices;
};

// Non-overlapping row-major tiles. `patch` must divide both extents.
std::vector<std::pair<PatchIndex, Tensor>> decompose(const Tensor& field, int patch);

// Per-frame crop of [F,H,W] at a patch position -> [F,patch,patch].
Tensor crop_patch(const Tensor& frames, const PatchIndex& idx, int patch);

// Tiles a full [F,H,W] stack into per-patch histories indexed by linear_id.
std::vector<Tensor> decompose_frames(const Tensor& frames, int patch, GridGeometry* geom_out);

// Center plus its 8 neighbors (clockwise from north); off-grid neighbors are
// replaced by replicas of the center patch so border conditioning stays
// in-distribution (zero patches would read as "no echo").
ReferencePatchSet neighborhood(const PatchIndex& center, const GridGeometry& grid,
                               const std::vector<Tensor>& patch_history);

// All grid patches in row-major order (the 4x4 = 16 reference mode).
ReferencePatchSet full_grid_refs(const GridGeometry& grid,
                                 const std::vector<Tensor>& patch_history);

// Exact inverse of decompose applied per time step. Tiles are
// (PatchIndex, [M,patch,patch]); every grid cell must appear exactly once.
Tensor stitch(const std::vector<std::pair<PatchIndex, Tensor>>& tiles, const GridGeometry& grid);

}  // namespace steamcast
