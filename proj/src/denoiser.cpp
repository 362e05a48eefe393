#include "steamcast/denoiser.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "steamcast/rng.hpp"
#include "steamcast/tensor_io.hpp"

namespace steamcast {

void DenoiserConfig::validate() const {
    if (d % 16 != 0) throw ConfigError("denoiser: d must be divisible by 16 (SpEn tiling)");
    if (heads < 1 || d % heads != 0) throw ConfigError("denoiser: heads must divide d");
    if (p < 1 || patch % p != 0) throw ConfigError("denoiser: p must divide patch");
    if (blocks < 1) throw ConfigError("denoiser: need at least one block");
    if (n_hist < 1 || m_fore < 1) throw ConfigError("denoiser: N and M must be >= 1");
    if (pos_capacity < 1) throw ConfigError("denoiser: positive position capacity required");
    if (d / 2 < 1) throw ConfigError("denoiser: d too small for the reference encoder");
}

NamedParams named_params(DenoiserParams& p) {
    NamedParams out;
    out.emplace_back("w_in", &p.w_in);
    out.emplace_back("b_in", &p.b_in);
    out.emplace_back("w_out", &p.w_out);
    out.emplace_back("b_out", &p.b_out);
    out.emplace_back("w_temb", &p.w_temb);
    out.emplace_back("conv1_w", &p.conv1_w);
    out.emplace_back("conv1_b", &p.conv1_b);
    out.emplace_back("conv2_w", &p.conv2_w);
    out.emplace_back("conv2_b", &p.conv2_b);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string pre = "blocks." + std::to_string(i) + ".";
        out.emplace_back(pre + "ln1_g", &b.ln1_g);
        out.emplace_back(pre + "ln1_b", &b.ln1_b);
        out.emplace_back(pre + "self_wq", &b.self_wq);
        out.emplace_back(pre + "self_wk", &b.self_wk);
        out.emplace_back(pre + "self_wv", &b.self_wv);
        out.emplace_back(pre + "self_wo", &b.self_wo);
        out.emplace_back(pre + "ln2_g", &b.ln2_g);
        out.emplace_back(pre + "ln2_b", &b.ln2_b);
        out.emplace_back(pre + "cross_wq", &b.cross_wq);
        out.emplace_back(pre + "cross_wk", &b.cross_wk);
        out.emplace_back(pre + "cross_wv", &b.cross_wv);
        out.emplace_back(pre + "cross_wo", &b.cross_wo);
        out.emplace_back(pre + "ln3_g", &b.ln3_g);
        out.emplace_back(pre + "ln3_b", &b.ln3_b);
        out.emplace_back(pre + "ff_w1", &b.ff_w1);
        out.emplace_back(pre + "ff_b1", &b.ff_b1);
        out.emplace_back(pre + "ff_w2", &b.ff_w2);
        out.emplace_back(pre + "ff_b2", &b.ff_b2);
    }
    return out;
}

long param_count(DenoiserParams& p) {
    long n = 0;
    for (auto& [name, t] : named_params(p)) n += t->numel();
    return n;
}

namespace {

Tensor fan_in_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<real>(fan_in)));
}

}  // namespace

DenoiserParams init_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed,
                                    bool zero_residual) {
    cfg.validate();
    Rng rng = derive_stream(seed, 0x696e6974);
    const int d = cfg.d, p2 = cfg.p * cfg.p, hid = 4 * cfg.d, c1 = cfg.d / 2;
    DenoiserParams params;
    params.w_in = fan_in_init({p2, d}, p2, rng);
    params.b_in = Tensor({d});
    params.w_out = fan_in_init({d, p2}, d, rng);
    params.b_out = Tensor({p2});
    params.w_temb = fan_in_init({d, d}, d, rng);
    params.conv1_w = fan_in_init({c1, 1, 3, 3}, 9, rng);
    params.conv1_b = Tensor({c1});
    params.conv2_w = fan_in_init({d, c1, 3, 3}, 9 * c1, rng);
    params.conv2_b = Tensor({d});
    params.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (auto& b : params.blocks) {
        b.ln1_g = Tensor::full({d}, 1.0);
        b.ln1_b = Tensor({d});
        b.ln2_g = Tensor::full({d}, 1.0);
        b.ln2_b = Tensor({d});
        b.ln3_g = Tensor::full({d}, 1.0);
        b.ln3_b = Tensor({d});
        b.self_wq = fan_in_init({d, d}, d, rng);
        b.self_wk = fan_in_init({d, d}, d, rng);
        b.self_wv = fan_in_init({d, d}, d, rng);
        b.self_wo = zero_residual ? Tensor({d, d}) : fan_in_init({d, d}, d, rng);
        b.cross_wq = fan_in_init({d, d}, d, rng);
        b.cross_wk = fan_in_init({d, d}, d, rng);
        b.cross_wv = fan_in_init({d, d}, d, rng);
        b.cross_wo = zero_residual ? Tensor({d, d}) : fan_in_init({d, d}, d, rng);
        b.ff_w1 = fan_in_init({d, hid}, d, rng);
        b.ff_b1 = Tensor({hid});
        b.ff_w2 = zero_residual ? Tensor({hid, d}) : fan_in_init({hid, d}, hid, rng);
        b.ff_b2 = Tensor({d});
    }
    return params;
}

Tensor timestep_embedding(int t, int d) {
    Tensor emb({1, d});
    for (int i = 0; i < d / 2; ++i) {
        const real freq = std::pow(10000.0, -2.0 * i / static_cast<real>(d));
        emb.at(0, 2 * i) = std::sin(t * freq);
        emb.at(0, 2 * i + 1) = std::cos(t * freq);
    }
    return emb;
}

ParamVars stage_params(Tape& tape, DenoiserParams& p) {
    ParamVars pv;
    pv.w_in = tape.param(&p.w_in);
    pv.b_in = tape.param(&p.b_in);
    pv.w_out = tape.param(&p.w_out);
    pv.b_out = tape.param(&p.b_out);
    pv.w_temb = tape.param(&p.w_temb);
    pv.conv1_w = tape.param(&p.conv1_w);
    pv.conv1_b = tape.param(&p.conv1_b);
    pv.conv2_w = tape.param(&p.conv2_w);
    pv.conv2_b = tape.param(&p.conv2_b);
    pv.blocks.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        auto& v = pv.blocks[i];
        v.ln1_g = tape.param(&b.ln1_g);
        v.ln1_b = tape.param(&b.ln1_b);
        v.ln2_g = tape.param(&b.ln2_g);
        v.ln2_b = tape.param(&b.ln2_b);
        v.ln3_g = tape.param(&b.ln3_g);
        v.ln3_b = tape.param(&b.ln3_b);
        v.self_wq = tape.param(&b.self_wq);
        v.self_wk = tape.param(&b.self_wk);
        v.self_wv = tape.param(&b.self_wv);
        v.self_wo = tape.param(&b.self_wo);
        v.cross_wq = tape.param(&b.cross_wq);
        v.cross_wk = tape.param(&b.cross_wk);
        v.cross_wv = tape.param(&b.cross_wv);
        v.cross_wo = tape.param(&b.cross_wo);
        v.ff_w1 = tape.param(&b.ff_w1);
        v.ff_b1 = tape.param(&b.ff_b1);
        v.ff_w2 = tape.param(&b.ff_w2);
        v.ff_b2 = tape.param(&b.ff_b2);
    }
    return pv;
}

std::vector<int> space_to_depth_map(int m, int patch, int p) {
    const int side = patch / p;
    std::vector<int> map(static_cast<std::size_t>(m * patch * patch));
    std::size_t out = 0;
    for (int gy = 0; gy < side; ++gy)
        for (int gx = 0; gx < side; ++gx)
            for (int t = 0; t < m; ++t)
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        map[out++] = (t * patch + gy * p + py) * patch + gx * p + px;
    return map;
}

std::vector<int> depth_to_space_map(int m, int patch, int p) {
    const std::vector<int> fwd = space_to_depth_map(m, patch, p);
    std::vector<int> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i)
        inv[static_cast<std::size_t>(fwd[i])] = static_cast<int>(i);
    return inv;
}

TokenMatrix tokenize_target(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                            const Tensor& x, int target_pos) {
    if (x.rank() != 3 || x.dim(0) != cfg.m_fore || x.dim(1) != cfg.patch || x.dim(2) != cfg.patch)
        throw DimensionError("tokenize_target: expected [M,patch,patch]");
    const int b = cfg.tokens_per_target(), p2 = cfg.p * cfg.p;
    Var raw = tape.reindex(tape.constant(x), space_to_depth_map(cfg.m_fore, cfg.patch, cfg.p),
                           {b, p2});
    TokenMatrix tm;
    tm.tokens = tape.add_row(tape.matmul(raw, pv.w_in), pv.b_in);
    tm.pos_index.assign(static_cast<std::size_t>(b), target_pos);
    tm.time_index.resize(static_cast<std::size_t>(b));
    for (int r = 0; r < b; ++r)
        tm.time_index[static_cast<std::size_t>(r)] = cfg.n_hist + r % cfg.m_fore;
    return tm;
}

TokenMatrix encode_references(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                              const ReferencePatchSet& refs) {
    const int t_refs = static_cast<int>(refs.patches.size());
    if (t_refs < 1) throw DimensionError("encode_references: empty reference set");
    const int n = cfg.n_hist, patch = cfg.patch, d = cfg.d, side = cfg.ref_side();
    Tensor stack({t_refs * n, 1, patch, patch});
    for (int i = 0; i < t_refs; ++i) {
        const Tensor& hist = refs.patches[static_cast<std::size_t>(i)];
        if (hist.rank() != 3 || hist.dim(0) != n || hist.dim(1) != patch || hist.dim(2) != patch)
            throw DimensionError("encode_references: reference patch must be [N,patch,patch]");
        std::copy(hist.data.begin(), hist.data.end(),
                  stack.data.begin() + static_cast<std::size_t>(i) * hist.data.size());
    }
    Var feat = tape.conv2d(tape.gelu(tape.conv2d(tape.constant(std::move(stack)), pv.conv1_w,
                                                 pv.conv1_b, 2)),
                           pv.conv2_w, pv.conv2_b, 2);
    // [T*N, d, side, side] -> rows ordered (patch, spatial, time step)
    const int rows = t_refs * side * side * n;
    std::vector<int> map(static_cast<std::size_t>(rows) * d);
    std::size_t out = 0;
    for (int i = 0; i < t_refs; ++i)
        for (int sy = 0; sy < side; ++sy)
            for (int sx = 0; sx < side; ++sx)
                for (int step = 0; step < n; ++step)
                    for (int c = 0; c < d; ++c)
                        map[out++] = (((i * n + step) * d + c) * side + sy) * side + sx;
    TokenMatrix tm;
    tm.tokens = tape.reindex(feat, std::move(map), {rows, d});
    tm.pos_index.reserve(static_cast<std::size_t>(rows));
    tm.time_index.reserve(static_cast<std::size_t>(rows));
    for (int i = 0; i < t_refs; ++i) {
        const int pos = refs.indices[static_cast<std::size_t>(i)].linear_id;
        for (int s = 0; s < side * side; ++s)
            for (int step = 0; step < n; ++step) {
                tm.pos_index.push_back(pos);
                tm.time_index.push_back(step);
            }
    }
    return tm;
}

Var attention(Tape& tape, const AttentionWeights& w, const TokenMatrix& queries,
              const TokenMatrix& keys_values, const DenoiserConfig& cfg) {
    const int d = cfg.d, dh = cfg.d / cfg.heads;
    Var q = tape.matmul(queries.tokens, w.wq);
    Var k = tape.matmul(keys_values.tokens, w.wk);
    Var v = tape.matmul(keys_values.tokens, w.wv);
    q = tape.mul_const(q, spen_modulation(queries.pos_index, queries.time_index, cfg.variant, d,
                                          cfg.pos_capacity, cfg.time_capacity()));
    k = tape.mul_const(k, spen_modulation(keys_values.pos_index, keys_values.time_index,
                                          cfg.variant, d, cfg.pos_capacity, cfg.time_capacity()));
    const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(dh));
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        Var qh = cfg.heads == 1 ? q : tape.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = cfg.heads == 1 ? k : tape.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = cfg.heads == 1 ? v : tape.slice_cols(v, h * dh, (h + 1) * dh);
        Var att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
        head_outs.push_back(tape.matmul(att, vh));
    }
    Var merged = cfg.heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    return tape.matmul(merged, w.wo);
}

Var predict_noise(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg,
                  const TokenMatrix& target, int t_diff, const TokenMatrix& refs) {
    Var temb = tape.matmul(tape.constant(timestep_embedding(t_diff, cfg.d)), pv.w_temb);
    TokenMatrix x = target;
    x.tokens = tape.add_row(target.tokens, temb);
    for (const auto& b : pv.blocks) {
        TokenMatrix a = x;
        a.tokens = tape.layer_norm(x.tokens, b.ln1_g, b.ln1_b);
        x.tokens = tape.add(
            x.tokens, attention(tape, {b.self_wq, b.self_wk, b.self_wv, b.self_wo}, a, a, cfg));

        a.tokens = tape.layer_norm(x.tokens, b.ln2_g, b.ln2_b);
        x.tokens = tape.add(x.tokens,
                            attention(tape, {b.cross_wq, b.cross_wk, b.cross_wv, b.cross_wo}, a,
                                      refs, cfg));

        Var ff = tape.layer_norm(x.tokens, b.ln3_g, b.ln3_b);
        ff = tape.gelu(tape.add_row(tape.matmul(ff, b.ff_w1), b.ff_b1));
        ff = tape.add_row(tape.matmul(ff, b.ff_w2), b.ff_b2);
        x.tokens = tape.add(x.tokens, ff);
    }
    Var out = tape.add_row(tape.matmul(x.tokens, pv.w_out), pv.b_out);
    return tape.reindex(out, depth_to_space_map(cfg.m_fore, cfg.patch, cfg.p),
                        {cfg.m_fore, cfg.patch, cfg.patch});
}

Var denoise_graph(Tape& tape, const ParamVars& pv, const DenoiserConfig& cfg, const Tensor& x_t,
                  int t_diff, const ReferencePatchSet& refs, int target_pos) {
    TokenMatrix target = tokenize_target(tape, pv, cfg, x_t, target_pos);
    TokenMatrix context = encode_references(tape, pv, cfg, refs);
    return predict_noise(tape, pv, cfg, target, t_diff, context);
}

EncodedRefs encode_references_value(DenoiserParams& params, const DenoiserConfig& cfg,
                                    const ReferencePatchSet& refs) {
    Tape tape;
    ParamVars pv = stage_params(tape, params);
    TokenMatrix tm = encode_references(tape, pv, cfg, refs);
    return {tape.value(tm.tokens), tm.pos_index, tm.time_index};
}

Tensor predict_noise_value(DenoiserParams& params, const DenoiserConfig& cfg, const Tensor& x_t,
                           int t_diff, const EncodedRefs& refs, int target_pos) {
    Tape tape;
    ParamVars pv = stage_params(tape, params);
    TokenMatrix target = tokenize_target(tape, pv, cfg, x_t, target_pos);
    TokenMatrix context;
    context.tokens = tape.constant(refs.tokens);
    context.pos_index = refs.pos_index;
    context.time_index = refs.time_index;
    return tape.value(predict_noise(tape, pv, cfg, target, t_diff, context));
}

void save_checkpoint(const std::filesystem::path& dir, DenoiserParams& params,
                     const CheckpointMeta& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "params");
    nlohmann::ordered_json j;
    j["d"] = meta.config.d;
    j["p"] = meta.config.p;
    j["blocks"] = meta.config.blocks;
    j["heads"] = meta.config.heads;
    j["patch"] = meta.config.patch;
    j["n_hist"] = meta.config.n_hist;
    j["m_fore"] = meta.config.m_fore;
    j["pos_capacity"] = meta.config.pos_capacity;
    j["variant"] = to_string(meta.config.variant);
    j["ref_mode"] = meta.ref_mode;
    j["t_diff"] = meta.t_diff;
    j["beta_start"] = meta.beta_start;
    j["beta_end"] = meta.beta_end;
    j["seed"] = meta.seed;
    j["step"] = meta.step;
    std::ofstream os(dir / "manifest.json");
    os << j.dump(2) << "\n";
    if (!os) throw ConfigError("cannot write checkpoint manifest in " + dir.string());
    for (auto& [name, tensor] : named_params(params))
        write_tensor_file(dir / "params" / (name + ".fgt"), *tensor);
}

std::pair<DenoiserParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw ConfigError("checkpoint manifest missing: " + (dir / "manifest.json").string());
    nlohmann::json j = nlohmann::json::parse(is);
    CheckpointMeta meta;
    meta.config.d = j.at("d").get<int>();
    meta.config.p = j.at("p").get<int>();
    meta.config.blocks = j.at("blocks").get<int>();
    meta.config.heads = j.at("heads").get<int>();
    meta.config.patch = j.at("patch").get<int>();
    meta.config.n_hist = j.at("n_hist").get<int>();
    meta.config.m_fore = j.at("m_fore").get<int>();
    meta.config.pos_capacity = j.at("pos_capacity").get<int>();
    meta.config.variant = spen_variant_from_string(j.at("variant").get<std::string>());
    meta.ref_mode = j.at("ref_mode").get<std::string>();
    meta.t_diff = j.at("t_diff").get<int>();
    meta.beta_start = j.at("beta_start").get<real>();
    meta.beta_end = j.at("beta_end").get<real>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.step = j.at("step").get<long>();
    meta.config.validate();
    DenoiserParams params = init_denoiser_params(meta.config, 0);
    for (auto& [name, tensor] : named_params(params)) {
        Tensor loaded = read_tensor_file(dir / "params" / (name + ".fgt"));
        if (loaded.shape != tensor->shape)
            throw ConfigError("checkpoint parameter shape mismatch for " + name);
        *tensor = std::move(loaded);
    }
    return {std::move(params), meta};
}

}  // namespace steamcast
