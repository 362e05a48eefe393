#include "steamcast/radar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "steamcast/rng.hpp"
#include "steamcast/tensor_io.hpp"

namespace steamcast {

namespace {

real wrap_coord(real x, int extent) {
    real w = std::fmod(x, static_cast<real>(extent));
    if (w < 0) w += extent;
    return w;
}

// Minimal-image (toroidal) axis distance.
real torus_dist(real a, real b, int extent) {
    real d = std::fabs(a - b);
    return std::min(d, extent - d);
}

}  // namespace

RadarSequence generate_from_cells(const std::vector<StormCell>& cells, std::uint64_t seed,
                                  int frames, int height, int width, real noise_std) {
    if (frames < 10) throw ConfigError("generate: need at least 10 frames");
    if (height < 32 || width < 32) throw ConfigError("generate: extents must be >= 32");
    for (const auto& c : cells) {
        if (!(c.amplitude > 0.0 && c.amplitude <= 1.0))
            throw ConfigError("generate: cell amplitude must be in (0,1]");
        if (!(c.radius > 0.0)) throw ConfigError("generate: cell radius must be positive");
    }
    RadarSequence seq;
    seq.frames = Tensor({frames, height, width});
    for (int t = 0; t < frames; ++t) {
        Rng noise = derive_stream(seed, 0x6e6f6973, static_cast<std::uint64_t>(t));
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                real v = 0.0;
                for (const auto& c : cells) {
                    const real cy = wrap_coord(c.row + t * c.d_row, height);
                    const real cx = wrap_coord(c.col + t * c.d_col, width);
                    const real amp = c.amplitude * std::pow(c.growth_rate, t);
                    const real dy = torus_dist(static_cast<real>(y), cy, height);
                    const real dx = torus_dist(static_cast<real>(x), cx, width);
                    v += amp * std::exp(-(dy * dy + dx * dx) / (2.0 * c.radius * c.radius));
                }
                if (noise_std > 0.0) v += noise_std * noise.normal();
                seq.frames.at(t, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return seq;
}

RadarSequence generate_sequence(std::uint64_t seed, int frames, int height, int width,
                                int n_cells, real noise_std) {
    if (n_cells < 0) throw ConfigError("generate: negative cell count");
    Rng rng = derive_stream(seed, 0x63656c6c);
    std::vector<StormCell> cells;
    cells.reserve(static_cast<std::size_t>(n_cells));
    for (int i = 0; i < n_cells; ++i) {
        StormCell c;
        c.row = rng.uniform() * height;
        c.col = rng.uniform() * width;
        const real speed = 0.5 + rng.uniform();  // [0.5, 1.5) px/frame
        const real heading = 2.0 * M_PI * rng.uniform();
        c.d_row = speed * std::sin(heading);
        c.d_col = speed * std::cos(heading);
        c.amplitude = 0.5 + 0.5 * rng.uniform();
        c.radius = 3.0 + 4.0 * rng.uniform();
        c.growth_rate = 0.99 + 0.02 * rng.uniform();
        cells.push_back(c);
    }
    return generate_from_cells(cells, seed, frames, height, width, noise_std);
}

std::vector<Window> extract_windows(const RadarSequence& seq, int n_hist, int m_fore,
                                    int stride) {
    if (stride < 1) throw ConfigError("extract_windows: stride must be >= 1");
    if (n_hist < 1 || m_fore < 1) throw ConfigError("extract_windows: N and M must be >= 1");
    const int f = seq.frames.dim(0), h = seq.frames.dim(1), w = seq.frames.dim(2);
    const int span = n_hist + m_fore;
    if (span > f)
        throw ConfigError("insufficient frames: need " + std::to_string(span) + ", have " +
                          std::to_string(f));
    std::vector<Window> out;
    for (int start = 0; start + span <= f; start += stride) {
        Window win;
        win.history = Tensor({n_hist, h, w});
        win.future = Tensor({m_fore, h, w});
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        std::copy_n(seq.frames.data.begin() + start * plane, n_hist * plane,
                    win.history.data.begin());
        std::copy_n(seq.frames.data.begin() + (start + n_hist) * plane, m_fore * plane,
                    win.future.data.begin());
        out.push_back(std::move(win));
    }
    return out;
}

DatasetSplit split_dataset(int n_windows, const std::array<real, 3>& ratios, std::uint64_t seed) {
    if (n_windows < 3) throw ConfigError("split_dataset: need at least 3 windows");
    const real sum = ratios[0] + ratios[1] + ratios[2];
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split_dataset: ratios must sum to 1");
    const int n_val = static_cast<int>(std::floor(n_windows * ratios[1]));
    const int n_test = static_cast<int>(std::floor(n_windows * ratios[2]));
    const int n_train = n_windows - n_val - n_test;  // remainder goes to train

    std::vector<int> idx(static_cast<std::size_t>(n_windows));
    for (int i = 0; i < n_windows; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng = derive_stream(seed, 0x73706c69);
    for (int i = n_windows - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

    DatasetSplit split;
    split.train.assign(idx.begin(), idx.begin() + n_train);
    split.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    split.test.assign(idx.begin() + n_train + n_val, idx.end());
    return split;
}

namespace {

std::string window_filename(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "window_%06d.fgt", i);
    return buf;
}

Tensor pack_window(const Window& w) {
    const int n = w.history.dim(0), m = w.future.dim(0);
    const int h = w.history.dim(1), wd = w.history.dim(2);
    Tensor t({n + m, h, wd});
    std::copy(w.history.data.begin(), w.history.data.end(), t.data.begin());
    std::copy(w.future.data.begin(), w.future.data.end(),
              t.data.begin() + w.history.data.size());
    return t;
}

Window unpack_window(const Tensor& t, int n_hist) {
    if (t.rank() != 3 || t.dim(0) <= n_hist)
        throw FormatError("window tensor must be [N+M,H,W] with N+M > N", 0);
    Window w;
    const int m = t.dim(0) - n_hist, h = t.dim(1), wd = t.dim(2);
    w.history = Tensor({n_hist, h, wd});
    w.future = Tensor({m, h, wd});
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    std::copy_n(t.data.begin(), n_hist * plane, w.history.data.begin());
    std::copy_n(t.data.begin() + n_hist * plane, m * plane, w.future.data.begin());
    return w;
}

}  // namespace

void build_dataset(const DatasetConfig& cfg, const std::filesystem::path& root) {
    std::vector<Window> all;
    for (int s = 0; s < cfg.n_sequences; ++s) {
        RadarSequence seq = generate_sequence(derive_seed(cfg.seed, 0x73657175, s), cfg.frames,
                                              cfg.height, cfg.width, cfg.n_cells, cfg.noise_std);
        seq.frame_interval_minutes = cfg.frame_interval_minutes;
        auto wins = extract_windows(seq, cfg.n_hist, cfg.m_fore, cfg.stride);
        for (auto& w : wins) all.push_back(std::move(w));
    }
    DatasetSplit split = split_dataset(static_cast<int>(all.size()), cfg.ratios, cfg.seed);

    namespace fs = std::filesystem;
    const char* split_names[3] = {"train", "val", "test"};
    const std::vector<int>* split_idx[3] = {&split.train, &split.val, &split.test};
    for (int s = 0; s < 3; ++s) {
        fs::create_directories(root / split_names[s]);
        int out_i = 0;
        for (int wi : *split_idx[s])
            write_tensor_file(root / split_names[s] / window_filename(out_i++),
                              pack_window(all[static_cast<std::size_t>(wi)]));
    }

    nlohmann::ordered_json manifest;
    manifest["seed"] = cfg.seed;
    manifest["n_sequences"] = cfg.n_sequences;
    manifest["frames"] = cfg.frames;
    manifest["height"] = cfg.height;
    manifest["width"] = cfg.width;
    manifest["n_cells"] = cfg.n_cells;
    manifest["noise_std"] = cfg.noise_std;
    manifest["n_hist"] = cfg.n_hist;
    manifest["m_fore"] = cfg.m_fore;
    manifest["stride"] = cfg.stride;
    manifest["ratios"] = cfg.ratios;
    manifest["frame_interval_minutes"] = cfg.frame_interval_minutes;
    manifest["counts"] = {{"train", split.train.size()},
                          {"val", split.val.size()},
                          {"test", split.test.size()}};
    std::ofstream os(root / "manifest.json");
    os << manifest.dump(2) << "\n";
    if (!os) throw ConfigError("cannot write manifest: " + (root / "manifest.json").string());
}

std::vector<Window> load_split_dir(const std::filesystem::path& split_dir, int n_hist) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(split_dir))
        throw ConfigError("dataset split directory missing: " + split_dir.string());
    std::vector<Window> out;
    for (int i = 0;; ++i) {
        const fs::path p = split_dir / window_filename(i);
        if (!fs::exists(p)) break;
        out.push_back(unpack_window(read_tensor_file(p), n_hist));
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& root) {
    std::ifstream is(root / "manifest.json");
    if (!is) throw ConfigError("dataset manifest missing: " + (root / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(is);
    Dataset ds;
    ds.config.seed = manifest.at("seed").get<std::uint64_t>();
    ds.config.n_sequences = manifest.at("n_sequences").get<int>();
    ds.config.frames = manifest.at("frames").get<int>();
    ds.config.height = manifest.at("height").get<int>();
    ds.config.width = manifest.at("width").get<int>();
    ds.config.n_cells = manifest.at("n_cells").get<int>();
    ds.config.noise_std = manifest.at("noise_std").get<real>();
    ds.config.n_hist = manifest.at("n_hist").get<int>();
    ds.config.m_fore = manifest.at("m_fore").get<int>();
    ds.config.stride = manifest.at("stride").get<int>();
    auto r = manifest.at("ratios");
    ds.config.ratios = {r.at(0).get<real>(), r.at(1).get<real>(), r.at(2).get<real>()};
    ds.config.frame_interval_minutes = manifest.at("frame_interval_minutes").get<real>();
    ds.train = load_split_dir(root / "train", ds.config.n_hist);
    ds.val = load_split_dir(root / "val", ds.config.n_hist);
    ds.test = load_split_dir(root / "test", ds.config.n_hist);
    return ds;
}

}  // namespace steamcast
