#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "steamcast/graph.hpp"
#include "steamcast/patch_grid.hpp"
#include "steamcast/spen.hpp"
#include "steamcast/tensor.hpp"

namespace steamcast {

struct DenoiserConfig {
    int d = 64;      // token width
    int p = 4;       // tokenizer block size (space-to-depth)
    int blocks = 4;  // attention block count
    int heads = 4;
    int patch = 16;  // patch height/width
    int n_hist = 5;  // N
    int m_fore = 5;  // M
    int pos_capacity = 16;
    SpenVariant variant = SpenVariant::Full;

    int time_capacity() const { return n_hist + m_fore; }
    int blocks_per_side() const { return patch / p; }
    int tokens_per_target() const { return blocks_per_side() * blocks_per_side() * m_fore; }
    int ref_side() const { return conv_out_extent(conv_out_extent(patch, 2), 2); }
    int tokens_per_ref_patch() const { return ref_side() * ref_side() * n_hist; }
    void validate() const;
};

struct DenoiserParams {
    struct Block {
        Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
        Tensor self_wq, self_wk, self_wv, self_wo;
        Tensor cross_wq, cross_wk, cross_wv, cross_wo;
        Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    };
    Tensor w_in, b_in;    // p^2 -> d
    Tensor w_out, b_out;  // d -> p^2
    Tensor w_temb;        // d -> d
    Tensor conv1_w, conv1_b, conv2_w, conv2_b;
    std::vector<Block> blocks;
};

// Stable-order list used by the optimizer, checkpoints and grad checks.
NamedParams named_params(DenoiserParams& p);
long param_count(DenoiserParams& p);

// Fan-in-scaled random init with a fixed seed. With zero_residual, every
// attention/FF output projection starts at zero, making the block stack the
// identity on tokens at step 0.
DenoiserParams init_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed,
                                    bool zero_residual = true);

// Standard sinusoidal embedding of an integer index, shape [1,d].
Tensor timestep_embedding(int t, int d);

struct TokenMatrix {
    Var tokens;                 // [b,d]
    std::vector<int> pos_index;   // patch-level grid position per token
    std::vector<int> time_index;  // 0..N-1 history, N..N+M-1 forecast
};

struct ParamVars {
    struct Block {
        Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
        Var self_wq, self_wk, self_wv, self_wo;
        Var cross_wq, cross_wk, cross_wv, cross_wo;
        Var ff_w1, ff_b1, ff_w2, ff_b2;
    };
    Var w_in, b_in, w_out, b_out, w_temb;
    Var conv1_w, conv1_b, conv2_w, conv2_b;
    std::vector<Block> blocks;
};

ParamVars stage_params(Tape& tape, DenoiserParams& p);

// Bijective index maps between [M,patch,patch] and the [b,p^2] token layout
// with rows ordered (spatial block, then time step).
std::vector<int> space_to_depth_map(int m, int patch, int p);
std::vector<int> depth_to_space_map(int m, int patch, int p);

// Space-to-depth plus the learned p^2 -> d projection. Token rows carry the
// target patch's grid position and forecast-step time indices.
TokenMatrix tokenize_target(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                            const Tensor& x, int target_pos);

// Two stride-2 convolutions (1 -> d/2 -> d, nonlinearity between) per patch
// and history step, flattened into one joint cross-attention context.
TokenMatrix encode_references(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                              const ReferencePatchSet& refs);

struct AttentionWeights {
    Var wq, wk, wv, wo;
};

// SpEn modulates Q and K (values stay unmodulated); multi-head softmax
// attention with per-head 1/sqrt(d_head) scaling.
Var attention(Tape& tape, const AttentionWeights& w, const TokenMatrix& queries,
              const TokenMatrix& keys_values, const DenoiserConfig& cfg);

// Full conditional noise prediction on tokenized inputs: additive sinusoidal
// diffusion-timestep embedding, then `blocks` rounds of
// [LN -> self-attention -> residual, LN -> cross-attention -> residual,
//  LN -> feed-forward -> residual], then the d -> p^2 projection and inverse
// space-to-depth back to [M,patch,patch].
Var predict_noise(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                  const TokenMatrix& target, int t_diff, const TokenMatrix& refs);

// Convenience: tokenize + encode + predict in one tape.
Var denoise_graph(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg, const Tensor& x_t,
                  int t_diff, const ReferencePatchSet& refs, int target_pos);

// Inference path: reference encoding is done once per patch and reused
// across sampler steps.
struct EncodedRefs {
    Tensor tokens;
    std::vector<int> pos_index, time_index;
};

EncodedRefs encode_references_value(DenoiserParams& params, const DenoiserConfig& cfg,
                                    const ReferencePatchSet& refs);
Tensor predict_noise_value(DenoiserParams& params, const DenoiserConfig& cfg, const Tensor& x_t,
                           int t_diff, const EncodedRefs& refs, int target_pos);

// Checkpoint directory: manifest.json plus one FGT1 file per named parameter.
struct CheckpointMeta {
    DenoiserConfig config;
    std::string ref_mode = "neighborhood";  // or "fullgrid"
    int t_diff = 200;
    real beta_start = 1e-4;
    real beta_end = 0.02;
    std::uint64_t seed = 0;
    long step = 0;
};

void save_checkpoint(const std::filesystem::path& dir, DenoiserParams& params,
                     const CheckpointMeta& meta);
std::pair<DenoiserParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& dir);

}  // namespace steamcast
