#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "steamcast/denoiser.hpp"
#include "steamcast/patch_grid.hpp"
#include "steamcast/radar_sim.hpp"

namespace steamcast {

struct NoiseSchedule {
    int t_diff = 0;
    std::vector<real> beta, alpha, alpha_bar;
    // alpha_bar extended with the t = 0 convention alpha_bar(0) = 1.
    real alpha_bar_at(int t) const {
        if (t < 0 || t > t_diff) throw BoundsError("alpha_bar_at: t out of range");
        return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
    }
};

// Linear beta interpolation; alpha_bar by running product.
NoiseSchedule build_schedule(int t_diff, real beta_start, real beta_end);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, t in [0, T].
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// One training window pre-cut into per-patch histories and futures.
struct PreparedWindow {
    std::vector<Tensor> history_patches;  // [N,patch,patch] per grid cell
    std::vector<Tensor> future_patches;   // [M,patch,patch] per grid cell
    GridGeometry grid;
};

PreparedWindow prepare_window(const Window& w, int patch);
std::vector<PreparedWindow> prepare_windows(const std::vector<Window>& ws, int patch);

// One sample of the epsilon-prediction objective: a window, a uniformly
// drawn target patch, a uniform diffusion step and a standard-normal noise.
struct SampleDraw {
    int window = 0;
    int target_pos = 0;
    int t = 1;
    Tensor eps;
};

SampleDraw draw_sample(std::uint64_t root_seed, long step, int slot, int n_windows,
                       const GridGeometry& grid, const NoiseSchedule& sched,
                       const DenoiserConfig& cfg);

ReferencePatchSet build_refs(const PreparedWindow& win, int target_pos,
                             const std::string& ref_mode);

// Loss of one sample; gradients in named_params order when wanted.
real sample_loss(DenoiserParams& params, const DenoiserConfig& cfg, const NoiseSchedule& sched,
                 const PreparedWindow& win, const SampleDraw& draw, const std::string& ref_mode,
                 std::vector<Tensor>* grads_out);

// Mean objective over a batch under an arbitrary noise predictor; used to
// pin the loss semantics against analytic oracles independently of the
// network.
using BatchPredictor =
    std::function<Tensor(const Tensor& x_t, int t, const ReferencePatchSet& refs, int pos)>;
real training_loss_value(const std::vector<std::pair<const PreparedWindow*, SampleDraw>>& batch,
                         const BatchPredictor& predictor, const NoiseSchedule& sched,
                         const std::string& ref_mode);

struct TrainConfig {
    long steps = 2000;
    int batch = 4;
    real lr = 1e-4;
    real weight_decay = 0.01;
    real adam_beta1 = 0.9;
    real adam_beta2 = 0.999;
    real adam_eps = 1e-8;
    int threads = 0;  // 0 = min(batch, hardware)
    std::string ref_mode = "neighborhood";
    long ckpt_every = 0;  // 0 = no intermediate checkpoints
};

struct TrainState {
    DenoiserParams params;
    std::vector<Tensor> opt_m, opt_v;  // AdamW moments, named_params order
    long step = 0;
    std::uint64_t seed = 0;
    std::vector<real> loss_history;
};

TrainState init_train_state(const DenoiserConfig& cfg, std::uint64_t seed);

// AdamW with decoupled weight decay. Per-sample work may run on threads;
// gradients are reduced in batch-slot order so results do not depend on the
// thread count. Throws DivergenceError on a non-finite loss.
void train(TrainState& state, const std::vector<PreparedWindow>& windows,
           const DenoiserConfig& cfg, const NoiseSchedule& sched, const TrainConfig& tc,
           const std::function<void(long, real)>& on_step = nullptr,
           const std::function<void(long, TrainState&)>& on_checkpoint = nullptr);

// Deterministic validation objective (fixed draws per window).
real validation_loss(DenoiserParams& params, const DenoiserConfig& cfg,
                     const NoiseSchedule& sched, const std::vector<PreparedWindow>& windows,
                     const std::string& ref_mode, std::uint64_t seed, int draws_per_window = 4);

using NoisePredictor = std::function<Tensor(const Tensor& x_t, int t)>;

// Ancestral DDPM chain from pure noise; z = 0 at t = 1, and everywhere when
// deterministic is set. Output clipped to [0,1] after the last step only.
Tensor sample_ddpm_with(const NoisePredictor& predict, const NoiseSchedule& sched,
                        const std::vector<int>& shape, std::uint64_t seed,
                        bool deterministic = false);

// Deterministic (eta = 0) DDIM over a uniformly strided timestep subsequence.
Tensor sample_ddim_with(const NoisePredictor& predict, const NoiseSchedule& sched,
                        const std::vector<int>& shape, int steps, std::uint64_t seed);

Tensor sample_ddpm(DenoiserParams& params, const DenoiserConfig& cfg,
                   const ReferencePatchSet& refs, int target_pos, const NoiseSchedule& sched,
                   std::uint64_t seed, bool deterministic = false);
Tensor sample_ddim(DenoiserParams& params, const DenoiserConfig& cfg,
                   const ReferencePatchSet& refs, int target_pos, const NoiseSchedule& sched,
                   int steps, std::uint64_t seed);

struct NowcastConfig {
    std::string sampler = "ddim";  // ddpm | ddim
    int sampler_steps = 20;
    std::string ref_mode = "neighborhood";
    int threads = 1;
    std::uint64_t seed = 0;
};

using PatchObserver = std::function<void(const PatchIndex&, const Tensor&)>;

// Tiled inference: decompose the history, sample every patch independently
// (per-patch seeds derived from the root seed), stitch the results.
Tensor nowcast(DenoiserParams& params, const DenoiserConfig& cfg, const NoiseSchedule& sched,
               const Tensor& history, const NowcastConfig& nc,
               const PatchObserver& observer = nullptr);

}  // namespace steamcast
