#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "steamcast/tensor.hpp"

namespace steamcast {

// Advected Gaussian convective cell. Positions are in grid units and wrap
// toroidally; amplitude evolves multiplicatively per frame.
struct StormCell {
    real row = 0.0, col = 0.0;
    real d_row = 0.0, d_col = 0.0;  // per-frame velocity
    real amplitude = 1.0;           // in (0,1]
    real radius = 4.0;              // grid units, > 0
    real growth_rate = 1.0;         // per-frame multiplicative factor
};

struct RadarSequence {
    Tensor frames;  // [F,H,W], values in [0,1]
    real frame_interval_minutes = 6.0;
};

// field(t) = clip(sum_c a_c g^t exp(-dist_toroidal^2 / (2 r^2)) + noise, 0, 1)
// Noise is zero-mean Gaussian of the given std, drawn from a per-frame
// stream derived from `seed`; pass noise_std = 0 to disable.
RadarSequence generate_from_cells(const std::vector<StormCell>& cells, std::uint64_t seed,
                                  int frames, int height, int width, real noise_std);

// Cells drawn deterministically from the seed: uniform centers, speeds in
// [0.5, 1.5] px/frame with uniform heading, amplitude in [0.5, 1], radius in
// [3, 7], growth in [0.99, 1.01].
RadarSequence generate_sequence(std::uint64_t seed, int frames, int height, int width,
                                int n_cells, real noise_std = 0.01);

struct Window {
    Tensor history;  // [N,H,W]
    Tensor future;   // [M,H,W]
};

// Sliding windows in temporal order; stride = N+M gives the non-overlapping
// splitting. Throws ConfigError when no window fits.
std::vector<Window> extract_windows(const RadarSequence& seq, int n_hist, int m_fore, int stride);

struct DatasetSplit {
    std::vector<int> train, val, test;
};

// Floor(n * ratio) for val/test with the remainder assigned to train;
// deterministic shuffle per seed.
DatasetSplit split_dataset(int n_windows, const std::array<real, 3>& ratios, std::uint64_t seed);

// On-disk dataset: root/manifest.json plus root/{train,val,test}/window_%06d.fgt,
// each file one [N+M,H,W] tensor (history frames first).
struct DatasetConfig {
    std::uint64_t seed = 0;
    int n_sequences = 24;
    int frames = 20;
    int height = 64;
    int width = 64;
    int n_cells = 3;
    real noise_std = 0.01;
    int n_hist = 5;
    int m_fore = 5;
    int stride = 10;
    std::array<real, 3> ratios = {0.64, 0.16, 0.20};
    real frame_interval_minutes = 6.0;
};

void build_dataset(const DatasetConfig& cfg, const std::filesystem::path& root);

struct Dataset {
    DatasetConfig config;
    std::vector<Window> train, val, test;
};

Dataset load_dataset(const std::filesystem::path& root);
std::vector<Window> load_split_dir(const std::filesystem::path& split_dir, int n_hist);

}  // namespace steamcast
