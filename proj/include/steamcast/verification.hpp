#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "steamcast/tensor.hpp"

namespace steamcast {

struct ContingencyTable {
    long hits = 0;
    long misses = 0;
    long false_alarms = 0;
    long correct_negatives = 0;
    real threshold = 0.5;

    long total() const { return hits + misses + false_alarms + correct_negatives; }
    ContingencyTable& operator+=(const ContingencyTable& o);
};

real mse(const Tensor& pred, const Tensor& truth);

// 10 log10(max_val^2 / mse); nullopt encodes the +infinity sentinel (mse 0).
std::optional<real> psnr(const Tensor& pred, const Tensor& truth, real max_val = 1.0);
std::optional<real> psnr_from_mse(real mse_value, real max_val = 1.0);

// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) window positions, averaged
// over the leading (time) axis for rank-3 inputs. C1 = (0.01 L)^2,
// C2 = (0.03 L)^2 with L = 1.
real ssim(const Tensor& pred, const Tensor& truth);

// Event := value >= threshold, tabulated pixel-wise.
ContingencyTable contingency(const Tensor& pred, const Tensor& truth, real threshold);

// ETS = (H - H_rand) / (H + Mi + F - H_rand), H_rand = (H+Mi)(H+F)/total;
// a zero denominator (perfect no-event agreement) is defined as 0.
real ets(const ContingencyTable& t);
real acc(const ContingencyTable& t);

// Repeat the last observed frame M times.
Tensor persistence_baseline(const Tensor& history, int m_fore);

struct LeadMetrics {
    int lead = 0;  // 1-based forecast step
    real mse = 0.0;
    std::optional<real> psnr_db;
    real ssim = 0.0;
    real ets = 0.0;
    real acc = 0.0;
};

struct MetricsReport {
    real mse = 0.0;
    std::optional<real> psnr_db;
    real ssim = 0.0;
    real ets = 0.0;
    real acc = 0.0;
    real threshold = 0.5;
    int n_windows = 0;
    std::vector<LeadMetrics> per_lead;
};

// Aggregation across windows: MSE pooled over all pixels, PSNR from the
// pooled MSE, SSIM averaged over window/time slices, ETS/ACC from pooled
// contingency counts.
MetricsReport evaluate_windows(const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& truths, real threshold);

// Reads window_%06d.fgt predictions and the matching truth windows
// ([N+M,H,W]; the trailing frames are the verification target), then writes
// nothing. Missing files on either side raise EvalError listing them.
MetricsReport evaluate_run(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& truth_dir, real threshold);

std::string metrics_to_json(const MetricsReport& r);
void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r);

}  // namespace steamcast
