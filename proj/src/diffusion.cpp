#include "steamcast/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace steamcast {

NoiseSchedule build_schedule(int t_diff, real beta_start, real beta_end) {
    if (t_diff < 2) throw ConfigError("build_schedule: need at least 2 steps");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.t_diff = t_diff;
    s.beta.resize(static_cast<std::size_t>(t_diff));
    s.alpha.resize(static_cast<std::size_t>(t_diff));
    s.alpha_bar.resize(static_cast<std::size_t>(t_diff));
    real prod = 1.0;
    for (int i = 0; i < t_diff; ++i) {
        const real frac = t_diff == 1 ? 0.0 : static_cast<real>(i) / (t_diff - 1);
        const real b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<std::size_t>(i)] = b;
        s.alpha[static_cast<std::size_t>(i)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "forward_noise");
    const real ab = sched.alpha_bar_at(t);
    const real cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = cs * x0.data[i] + cn * eps.data[i];
    return out;
}

PreparedWindow prepare_window(const Window& w, int patch) {
    PreparedWindow pw;
    pw.history_patches = decompose_frames(w.history, patch, &pw.grid);
    pw.future_patches = decompose_frames(w.future, patch, nullptr);
    return pw;
}

std::vector<PreparedWindow> prepare_windows(const std::vector<Window>& ws, int patch) {
    std::vector<PreparedWindow> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(prepare_window(w, patch));
    return out;
}

SampleDraw draw_sample(std::uint64_t root_seed, long step, int slot, int n_windows,
                       const GridGeometry& grid, const NoiseSchedule& sched,
                       const DenoiserConfig& cfg) {
    Rng rng = derive_stream(root_seed, static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(slot));
    SampleDraw d;
    d.window = rng.uniform_int(n_windows);
    d.target_pos = rng.uniform_int(grid.count());
    d.t = 1 + rng.uniform_int(sched.t_diff);
    d.eps = Tensor::randn({cfg.m_fore, cfg.patch, cfg.patch}, rng);
    return d;
}

ReferencePatchSet build_refs(const PreparedWindow& win, int target_pos,
                             const std::string& ref_mode) {
    const PatchIndex center = win.grid.index_at(target_pos / win.grid.cols,
                                                target_pos % win.grid.cols);
    if (ref_mode == "neighborhood") return neighborhood(center, win.grid, win.history_patches);
    if (ref_mode == "fullgrid") return full_grid_refs(win.grid, win.history_patches);
    throw ConfigError("unknown ref mode '" + ref_mode + "' (expected neighborhood|fullgrid)");
}

real sample_loss(DenoiserParams& params, const DenoiserConfig& cfg, const NoiseSchedule& sched,
                 const PreparedWindow& win, const SampleDraw& draw, const std::string& ref_mode,
                 std::vector<Tensor>* grads_out) {
    const Tensor& target = win.future_patches[static_cast<std::size_t>(draw.target_pos)];
    const Tensor x_t = forward_noise(target, draw.t, draw.eps, sched);
    const ReferencePatchSet refs = build_refs(win, draw.target_pos, ref_mode);

    Tape tape;
    ParamVars pv = stage_params(tape, params);
    Var pred = denoise_graph(tape, pv, cfg, x_t, draw.t, refs, draw.target_pos);
    Var loss = tape.mse_against(pred, draw.eps);
    const real value = tape.value(loss).data[0];
    if (grads_out) {
        tape.backward(loss);
        grads_out->clear();
        for (auto& [name, ptr] : named_params(params)) {
            const Tensor* g = tape.grad_of(ptr);
            grads_out->push_back(g ? *g : Tensor(ptr->shape));
        }
    }
    return value;
}

real training_loss_value(const std::vector<std::pair<const PreparedWindow*, SampleDraw>>& batch,
                         const BatchPredictor& predictor, const NoiseSchedule& sched,
                         const std::string& ref_mode) {
    if (batch.empty()) throw ConfigError("training_loss: empty batch");
    real total = 0.0;
    for (const auto& [win, draw] : batch) {
        const Tensor& target = win->future_patches[static_cast<std::size_t>(draw.target_pos)];
        const Tensor x_t = forward_noise(target, draw.t, draw.eps, sched);
        const ReferencePatchSet refs = build_refs(*win, draw.target_pos, ref_mode);
        const Tensor pred = predictor(x_t, draw.t, refs, draw.target_pos);
        check_same_shape(pred, draw.eps, "training_loss predictor output");
        real acc = 0.0;
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const real diff = pred.data[i] - draw.eps.data[i];
            acc += diff * diff;
        }
        total += acc / static_cast<real>(pred.numel());
    }
    return total / static_cast<real>(batch.size());
}

TrainState init_train_state(const DenoiserConfig& cfg, std::uint64_t seed) {
    TrainState st;
    st.params = init_denoiser_params(cfg, seed);
    st.seed = seed;
    for (auto& [name, ptr] : named_params(st.params)) {
        st.opt_m.emplace_back(ptr->shape);
        st.opt_v.emplace_back(ptr->shape);
    }
    return st;
}

void train(TrainState& state, const std::vector<PreparedWindow>& windows,
           const DenoiserConfig& cfg, const NoiseSchedule& sched, const TrainConfig& tc,
           const std::function<void(long, real)>& on_step,
           const std::function<void(long, TrainState&)>& on_checkpoint) {
    if (windows.empty()) throw ConfigError("train: empty dataset");
    cfg.validate();
    const GridGeometry grid = windows.front().grid;
    auto params = named_params(state.params);
    const int n_params = static_cast<int>(params.size());

    int threads = tc.threads > 0 ? tc.threads
                                 : std::max(1, std::min<int>(tc.batch,
                                       static_cast<int>(std::thread::hardware_concurrency())));
    threads = std::min(threads, tc.batch);

    const long end_step = state.step + tc.steps;
    std::vector<real> losses(static_cast<std::size_t>(tc.batch));
    std::vector<std::vector<Tensor>> grads(static_cast<std::size_t>(tc.batch));

    for (; state.step < end_step; ++state.step) {
        auto run_slot = [&](int slot) {
            SampleDraw draw = draw_sample(state.seed, state.step, slot,
                                          static_cast<int>(windows.size()), grid, sched, cfg);
            losses[static_cast<std::size_t>(slot)] =
                sample_loss(state.params, cfg, sched,
                            windows[static_cast<std::size_t>(draw.window)], draw, tc.ref_mode,
                            &grads[static_cast<std::size_t>(slot)]);
        };
        if (threads <= 1) {
            for (int slot = 0; slot < tc.batch; ++slot) run_slot(slot);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < threads; ++w)
                pool.emplace_back([&, w]() {
                    for (int slot = w; slot < tc.batch; slot += threads) run_slot(slot);
                });
            for (auto& th : pool) th.join();
        }

        real batch_loss = 0.0;
        for (int slot = 0; slot < tc.batch; ++slot)
            batch_loss += losses[static_cast<std::size_t>(slot)];
        batch_loss /= tc.batch;
        if (!std::isfinite(batch_loss))
            throw DivergenceError("training diverged at step " + std::to_string(state.step));

        // Gradient reduction in fixed slot order, then AdamW.
        const long t = state.step + 1;
        const real bc1 = 1.0 - std::pow(tc.adam_beta1, static_cast<real>(t));
        const real bc2 = 1.0 - std::pow(tc.adam_beta2, static_cast<real>(t));
        for (int pi = 0; pi < n_params; ++pi) {
            Tensor& p = *params[static_cast<std::size_t>(pi)].second;
            Tensor& m = state.opt_m[static_cast<std::size_t>(pi)];
            Tensor& v = state.opt_v[static_cast<std::size_t>(pi)];
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                real g = 0.0;
                for (int slot = 0; slot < tc.batch; ++slot)
                    g += grads[static_cast<std::size_t>(slot)][static_cast<std::size_t>(pi)]
                             .data[i];
                g /= tc.batch;
                m.data[i] = tc.adam_beta1 * m.data[i] + (1.0 - tc.adam_beta1) * g;
                v.data[i] = tc.adam_beta2 * v.data[i] + (1.0 - tc.adam_beta2) * g * g;
                const real mhat = m.data[i] / bc1;
                const real vhat = v.data[i] / bc2;
                p.data[i] -= tc.lr * (mhat / (std::sqrt(vhat) + tc.adam_eps) +
                                      tc.weight_decay * p.data[i]);
            }
        }

        state.loss_history.push_back(batch_loss);
        if (on_step) on_step(state.step, batch_loss);
        if (on_checkpoint && tc.ckpt_every > 0 && (state.step + 1) % tc.ckpt_every == 0)
            on_checkpoint(state.step + 1, state);
    }
}

real validation_loss(DenoiserParams& params, const DenoiserConfig& cfg,
                     const NoiseSchedule& sched, const std::vector<PreparedWindow>& windows,
                     const std::string& ref_mode, std::uint64_t seed, int draws_per_window) {
    if (windows.empty()) throw ConfigError("validation_loss: empty split");
    real total = 0.0;
    long count = 0;
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        for (int k = 0; k < draws_per_window; ++k) {
            SampleDraw d = draw_sample(derive_seed(seed, 0x76616c69, wi), 0, k, 1,
                                       windows[wi].grid, sched, cfg);
            d.window = static_cast<int>(wi);
            total += sample_loss(params, cfg, sched, windows[wi], d, ref_mode, nullptr);
            ++count;
        }
    }
    return total / static_cast<real>(count);
}

namespace {

void check_state_finite(const Tensor& x, int t) {
    if (!x.all_finite())
        throw DivergenceError("sampling diverged at diffusion step " + std::to_string(t));
}

Tensor clip01(Tensor x) {
    for (real& v : x.data) v = std::clamp(v, 0.0, 1.0);
    return x;
}

}  // namespace

Tensor sample_ddpm_with(const NoisePredictor& predict, const NoiseSchedule& sched,
                        const std::vector<int>& shape, std::uint64_t seed, bool deterministic) {
    Rng rng = derive_stream(seed, 0x6464706d);
    Tensor x = Tensor::randn(shape, rng);
    for (int t = sched.t_diff; t >= 1; --t) {
        const Tensor eps_hat = predict(x, t);
        check_same_shape(x, eps_hat, "sample_ddpm predictor output");
        const real beta = sched.beta[static_cast<std::size_t>(t - 1)];
        const real alpha = sched.alpha[static_cast<std::size_t>(t - 1)];
        const real ab = sched.alpha_bar_at(t);
        const real ab_prev = sched.alpha_bar_at(t - 1);
        const real inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        const real eps_coef = beta / std::sqrt(1.0 - ab);
        const real sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            real mu = inv_sqrt_alpha * (x.data[i] - eps_coef * eps_hat.data[i]);
            if (t > 1 && !deterministic) mu += sigma * rng.normal();
            x.data[i] = mu;
        }
        check_state_finite(x, t);
    }
    return clip01(std::move(x));
}

Tensor sample_ddim_with(const NoisePredictor& predict, const NoiseSchedule& sched,
                        const std::vector<int>& shape, int steps, std::uint64_t seed) {
    if (steps < 1 || steps > sched.t_diff)
        throw ConfigError("sample_ddim: steps must be in [1, T_diff]");
    std::vector<int> taus(static_cast<std::size_t>(steps));
    for (int i = 1; i <= steps; ++i)
        taus[static_cast<std::size_t>(i - 1)] = static_cast<int>(
            std::llround(static_cast<double>(i) * sched.t_diff / steps));
    Rng rng = derive_stream(seed, 0x6464696d);
    Tensor x = Tensor::randn(shape, rng);
    for (int j = steps - 1; j >= 0; --j) {
        const int t = taus[static_cast<std::size_t>(j)];
        const int t_prev = j > 0 ? taus[static_cast<std::size_t>(j - 1)] : 0;
        const Tensor eps_hat = predict(x, t);
        check_same_shape(x, eps_hat, "sample_ddim predictor output");
        const real ab = sched.alpha_bar_at(t);
        const real ab_prev = sched.alpha_bar_at(t_prev);
        const real inv_sqrt_ab = 1.0 / std::sqrt(ab);
        const real noise_scale = std::sqrt(1.0 - ab);
        const real cs = std::sqrt(ab_prev), cn = std::sqrt(1.0 - ab_prev);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const real x0_hat = inv_sqrt_ab * (x.data[i] - noise_scale * eps_hat.data[i]);
            x.data[i] = cs * x0_hat + cn * eps_hat.data[i];
        }
        check_state_finite(x, t);
    }
    return clip01(std::move(x));
}

namespace {

NoisePredictor denoiser_predictor(DenoiserParams& params, const DenoiserConfig& cfg,
                                  const ReferencePatchSet& refs, int target_pos,
                                  EncodedRefs& cache) {
    cache = encode_references_value(params, cfg, refs);
    return [&params, &cfg, &cache, target_pos](const Tensor& x_t, int t) {
        return predict_noise_value(params, cfg, x_t, t, cache, target_pos);
    };
}

}  // namespace

Tensor sample_ddpm(DenoiserParams& params, const DenoiserConfig& cfg,
                   const ReferencePatchSet& refs, int target_pos, const NoiseSchedule& sched,
                   std::uint64_t seed, bool deterministic) {
    EncodedRefs cache;
    auto predict = denoiser_predictor(params, cfg, refs, target_pos, cache);
    return sample_ddpm_with(predict, sched, {cfg.m_fore, cfg.patch, cfg.patch}, seed,
                            deterministic);
}

Tensor sample_ddim(DenoiserParams& params, const DenoiserConfig& cfg,
                   const ReferencePatchSet& refs, int target_pos, const NoiseSchedule& sched,
                   int steps, std::uint64_t seed) {
    EncodedRefs cache;
    auto predict = denoiser_predictor(params, cfg, refs, target_pos, cache);
    return sample_ddim_with(predict, sched, {cfg.m_fore, cfg.patch, cfg.patch}, steps, seed);
}

Tensor nowcast(DenoiserParams& params, const DenoiserConfig& cfg, const NoiseSchedule& sched,
               const Tensor& history, const NowcastConfig& nc, const PatchObserver& observer) {
    if (history.rank() != 3 || history.dim(0) != cfg.n_hist)
        throw ConfigError("nowcast: history must be [N,H,W] with N matching the model");
    if (history.dim(1) % cfg.patch != 0 || history.dim(2) % cfg.patch != 0)
        throw ConfigError("nowcast: field extents must be divisible by the patch size");
    if (nc.sampler != "ddpm" && nc.sampler != "ddim")
        throw ConfigError("nowcast: unknown sampler '" + nc.sampler + "'");

    GridGeometry grid;
    std::vector<Tensor> patch_history = decompose_frames(history, cfg.patch, &grid);
    if (grid.count() > cfg.pos_capacity)
        throw ConfigError("nowcast: grid has more patches than the model's position capacity");

    std::vector<Tensor> results(static_cast<std::size_t>(grid.count()));
    auto run_patch = [&](int lid) {
        const PatchIndex center = grid.index_at(lid / grid.cols, lid % grid.cols);
        const ReferencePatchSet refs =
            nc.ref_mode == "fullgrid" ? full_grid_refs(grid, patch_history)
                                      : neighborhood(center, grid, patch_history);
        const std::uint64_t patch_seed =
            derive_seed(nc.seed, 0x70617463, static_cast<std::uint64_t>(lid));
        results[static_cast<std::size_t>(lid)] =
            nc.sampler == "ddpm"
                ? sample_ddpm(params, cfg, refs, center.linear_id, sched, patch_seed)
                : sample_ddim(params, cfg, refs, center.linear_id, sched, nc.sampler_steps,
                              patch_seed);
    };

    const int threads = std::max(1, std::min(nc.threads, grid.count()));
    if (threads <= 1) {
        for (int lid = 0; lid < grid.count(); ++lid) run_patch(lid);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w]() {
                for (int lid = w; lid < grid.count(); lid += threads) run_patch(lid);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<std::pair<PatchIndex, Tensor>> tiles;
    tiles.reserve(static_cast<std::size_t>(grid.count()));
    for (int lid = 0; lid < grid.count(); ++lid) {
        const PatchIndex idx = grid.index_at(lid / grid.cols, lid % grid.cols);
        if (observer) observer(idx, results[static_cast<std::size_t>(lid)]);
        tiles.emplace_back(idx, std::move(results[static_cast<std::size_t>(lid)]));
    }
    return stitch(tiles, grid);
}

}  // namespace steamcast
