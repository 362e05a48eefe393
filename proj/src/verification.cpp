#include "steamcast/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "steamcast/tensor_io.hpp"

namespace steamcast {

ContingencyTable& ContingencyTable::operator+=(const ContingencyTable& o) {
    hits += o.hits;
    misses += o.misses;
    false_alarms += o.false_alarms;
    correct_negatives += o.correct_negatives;
    return *this;
}

real mse(const Tensor& pred, const Tensor& truth) {
    check_same_shape(pred, truth, "mse");
    real acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const real d = pred.data[i] - truth.data[i];
        acc += d * d;
    }
    return acc / static_cast<real>(pred.numel());
}

std::optional<real> psnr_from_mse(real mse_value, real max_val) {
    if (mse_value <= 0.0) return std::nullopt;
    return 10.0 * std::log10(max_val * max_val / mse_value);
}

std::optional<real> psnr(const Tensor& pred, const Tensor& truth, real max_val) {
    return psnr_from_mse(mse(pred, truth), max_val);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr real kSsimSigma = 1.5;
constexpr real kSsimC1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
constexpr real kSsimC2 = 0.03 * 0.03;

const std::vector<real>& ssim_kernel() {
    static const std::vector<real> k = [] {
        std::vector<real> v(kSsimWindow * kSsimWindow);
        const int c = kSsimWindow / 2;
        real sum = 0.0;
        for (int y = 0; y < kSsimWindow; ++y)
            for (int x = 0; x < kSsimWindow; ++x) {
                const real dy = y - c, dx = x - c;
                v[static_cast<std::size_t>(y * kSsimWindow + x)] =
                    std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
                sum += v[static_cast<std::size_t>(y * kSsimWindow + x)];
            }
        for (real& w : v) w /= sum;
        return v;
    }();
    return k;
}

// SSIM of one 2-D slice over fully-interior window positions.
real ssim_plane(const real* a, const real* b, int h, int w) {
    if (h < kSsimWindow || w < kSsimWindow)
        throw ConfigError("ssim: image smaller than the 11x11 window");
    const auto& kern = ssim_kernel();
    real total = 0.0;
    long count = 0;
    for (int oy = 0; oy + kSsimWindow <= h; ++oy) {
        for (int ox = 0; ox + kSsimWindow <= w; ++ox) {
            real ma = 0.0, mb = 0.0;
            for (int y = 0; y < kSsimWindow; ++y)
                for (int x = 0; x < kSsimWindow; ++x) {
                    const real kv = kern[static_cast<std::size_t>(y * kSsimWindow + x)];
                    ma += kv * a[(oy + y) * w + ox + x];
                    mb += kv * b[(oy + y) * w + ox + x];
                }
            real va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = 0; y < kSsimWindow; ++y)
                for (int x = 0; x < kSsimWindow; ++x) {
                    const real kv = kern[static_cast<std::size_t>(y * kSsimWindow + x)];
                    const real da = a[(oy + y) * w + ox + x] - ma;
                    const real db = b[(oy + y) * w + ox + x] - mb;
                    va += kv * da * da;
                    vb += kv * db * db;
                    cov += kv * da * db;
                }
            total += ((2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2)) /
                     ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
            ++count;
        }
    }
    return total / static_cast<real>(count);
}

}  // namespace

real ssim(const Tensor& pred, const Tensor& truth) {
    check_same_shape(pred, truth, "ssim");
    if (pred.rank() == 2) return ssim_plane(pred.data.data(), truth.data.data(), pred.dim(0), pred.dim(1));
    if (pred.rank() != 3) throw DimensionError("ssim: expected [H,W] or [T,H,W]");
    const int t = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    real total = 0.0;
    for (int i = 0; i < t; ++i)
        total += ssim_plane(pred.data.data() + i * plane, truth.data.data() + i * plane, h, w);
    return total / static_cast<real>(t);
}

ContingencyTable contingency(const Tensor& pred, const Tensor& truth, real threshold) {
    check_same_shape(pred, truth, "contingency");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("contingency: threshold must be in (0,1)");
    ContingencyTable t;
    t.threshold = threshold;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] >= threshold;
        const bool o = truth.data[i] >= threshold;
        if (p && o)
            ++t.hits;
        else if (!p && o)
            ++t.misses;
        else if (p && !o)
            ++t.false_alarms;
        else
            ++t.correct_negatives;
    }
    return t;
}

real ets(const ContingencyTable& t) {
    const real total = static_cast<real>(t.total());
    if (total <= 0.0) throw ConfigError("ets: empty table");
    const real h = static_cast<real>(t.hits);
    const real h_rand = static_cast<real>(t.hits + t.misses) *
                        static_cast<real>(t.hits + t.false_alarms) / total;
    const real denom = static_cast<real>(t.hits + t.misses + t.false_alarms) - h_rand;
    if (denom == 0.0) return 0.0;
    return (h - h_rand) / denom;
}

real acc(const ContingencyTable& t) {
    const real total = static_cast<real>(t.total());
    if (total <= 0.0) throw ConfigError("acc: empty table");
    return static_cast<real>(t.hits + t.correct_negatives) / total;
}

Tensor persistence_baseline(const Tensor& history, int m_fore) {
    if (history.rank() != 3 || history.dim(0) < 1)
        throw DimensionError("persistence: expected non-empty [N,H,W] history");
    const int h = history.dim(1), w = history.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out({m_fore, h, w});
    const real* last = history.data.data() + (history.dim(0) - 1) * plane;
    for (int m = 0; m < m_fore; ++m)
        std::copy_n(last, plane, out.data.begin() + m * plane);
    return out;
}

MetricsReport evaluate_windows(const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& truths, real threshold) {
    if (preds.size() != truths.size() || preds.empty())
        throw EvalError("evaluate: prediction/truth window counts differ or are empty");
    const int m = preds.front().dim(0);
    const int h = preds.front().dim(1), w = preds.front().dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    MetricsReport r;
    r.threshold = threshold;
    r.n_windows = static_cast<int>(preds.size());
    r.per_lead.resize(static_cast<std::size_t>(m));

    std::vector<real> sq_sum(static_cast<std::size_t>(m), 0.0);
    std::vector<real> ssim_sum(static_cast<std::size_t>(m), 0.0);
    std::vector<ContingencyTable> tables(static_cast<std::size_t>(m));

    for (std::size_t wi = 0; wi < preds.size(); ++wi) {
        const Tensor& p = preds[wi];
        const Tensor& t = truths[wi];
        check_same_shape(p, t, "evaluate");
        if (p.rank() != 3 || p.dim(0) != m) throw EvalError("evaluate: inconsistent window shapes");
        for (int lead = 0; lead < m; ++lead) {
            Tensor ps({h, w}), ts({h, w});
            std::copy_n(p.data.begin() + lead * plane, plane, ps.data.begin());
            std::copy_n(t.data.begin() + lead * plane, plane, ts.data.begin());
            sq_sum[static_cast<std::size_t>(lead)] += mse(ps, ts);
            ssim_sum[static_cast<std::size_t>(lead)] += ssim(ps, ts);
            tables[static_cast<std::size_t>(lead)] += contingency(ps, ts, threshold);
        }
    }

    real mse_all = 0.0, ssim_all = 0.0;
    ContingencyTable table_all;
    table_all.threshold = threshold;
    for (int lead = 0; lead < m; ++lead) {
        LeadMetrics& lm = r.per_lead[static_cast<std::size_t>(lead)];
        lm.lead = lead + 1;
        lm.mse = sq_sum[static_cast<std::size_t>(lead)] / static_cast<real>(preds.size());
        lm.psnr_db = psnr_from_mse(lm.mse);
        lm.ssim = ssim_sum[static_cast<std::size_t>(lead)] / static_cast<real>(preds.size());
        lm.ets = ets(tables[static_cast<std::size_t>(lead)]);
        lm.acc = acc(tables[static_cast<std::size_t>(lead)]);
        mse_all += lm.mse;
        ssim_all += lm.ssim;
        table_all += tables[static_cast<std::size_t>(lead)];
    }
    r.mse = mse_all / m;
    r.psnr_db = psnr_from_mse(r.mse);
    r.ssim = ssim_all / m;
    r.ets = ets(table_all);
    r.acc = acc(table_all);
    return r;
}

namespace {

std::string window_filename(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "window_%06d.fgt", i);
    return buf;
}

}  // namespace

MetricsReport evaluate_run(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& truth_dir, real threshold) {
    namespace fs = std::filesystem;
    std::set<std::string> pred_files, truth_files;
    for (auto& dir_and_set :
         {std::pair{&pred_dir, &pred_files}, std::pair{&truth_dir, &truth_files}}) {
        if (!fs::is_directory(*dir_and_set.first))
            throw EvalError("evaluate: missing directory " + dir_and_set.first->string());
        for (const auto& e : fs::directory_iterator(*dir_and_set.first))
            if (e.path().extension() == ".fgt")
                dir_and_set.second->insert(e.path().filename().string());
    }
    std::string missing;
    for (const auto& f : truth_files)
        if (!pred_files.count(f)) missing += " pred/" + f;
    for (const auto& f : pred_files)
        if (!truth_files.count(f)) missing += " truth/" + f;
    if (!missing.empty()) throw EvalError("evaluate: manifest mismatch, missing:" + missing);
    if (pred_files.empty()) throw EvalError("evaluate: no prediction files");

    std::vector<Tensor> preds, truths;
    for (const auto& f : pred_files) {
        Tensor p = read_tensor_file(pred_dir / f);
        Tensor t = read_tensor_file(truth_dir / f);
        if (p.rank() != 3 || t.rank() != 3 || t.dim(0) < p.dim(0) || p.dim(1) != t.dim(1) ||
            p.dim(2) != t.dim(2))
            throw EvalError("evaluate: incompatible shapes for " + f);
        // Truth windows are [N+M,H,W]; verify against the trailing M frames.
        const int m = p.dim(0), h = p.dim(1), w = p.dim(2);
        Tensor future({m, h, w});
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        std::copy_n(t.data.begin() + (t.dim(0) - m) * plane, m * plane, future.data.begin());
        preds.push_back(std::move(p));
        truths.push_back(std::move(future));
    }
    return evaluate_windows(preds, truths, threshold);
}

std::string metrics_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["mse"] = r.mse;
    j["psnr_db"] = r.psnr_db ? nlohmann::ordered_json(*r.psnr_db) : nlohmann::ordered_json(nullptr);
    j["psnr_infinite"] = !r.psnr_db.has_value();
    j["ssim"] = r.ssim;
    j["ets"] = r.ets;
    j["acc"] = r.acc;
    j["threshold"] = r.threshold;
    j["n_windows"] = r.n_windows;
    j["per_lead"] = nlohmann::ordered_json::array();
    for (const auto& lm : r.per_lead) {
        nlohmann::ordered_json lj;
        lj["lead"] = lm.lead;
        lj["mse"] = lm.mse;
        lj["psnr_db"] = lm.psnr_db ? nlohmann::ordered_json(*lm.psnr_db)
                                   : nlohmann::ordered_json(nullptr);
        lj["psnr_infinite"] = !lm.psnr_db.has_value();
        lj["ssim"] = lm.ssim;
        lj["ets"] = lm.ets;
        lj["acc"] = lm.acc;
        j["per_lead"].push_back(lj);
    }
    return j.dump(2) + "\n";
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r) {
    std::ofstream os(path);
    os << metrics_to_json(r);
    if (!os) throw ConfigError("cannot write metrics: " + path.string());
}

}  // namespace steamcast
