#pragma once

#include <span>
#include <string>
#include <vector>

#include "dlif/core.hpp"

namespace dlif {

/// Logan graphical analysis output: OLS slope (= V_T) and intercept of the
/// transformed integrals over frames with midpoint >= t_star.
struct LoganResult {
    double vt = 0.0;
    double intercept = 0.0;
    int n_points = 0;
    double t_star = 30.0;
};

/// The per-curve evaluation suite; segments split at 30 min by frame midpoint.
struct MetricsReport {
    double r = 0.0;
    double iou_early = 0.0;   // 0-30 min
    double iou_late = 0.0;    // 30-90 min
    double rmse_early = 0.0;
    double rmse_late = 0.0;
    double peak_bias = 0.0;   // fraction of the true peak
};

inline constexpr double kSegmentSplitMin = 30.0;

double pearson_r(const SampledCurve& yhat, const SampledCurve& y);
double iou(const SampledCurve& yhat, const SampledCurve& y, double t0, double t1);
double rmse(const SampledCurve& yhat, const SampledCurve& y, double t0, double t1);
double peak_bias(const SampledCurve& yhat, const SampledCurve& y);

MetricsReport evaluate_curves(const SampledCurve& yhat, const SampledCurve& y);

LoganResult logan_vt(const SampledCurve& ct, const SampledCurve& cp, double t_star = 30.0);

struct ParametricMap {
    int H = 0, W = 0, L = 0;
    std::vector<double> vt;   // NaN where the voxel failed preconditions
    std::int64_t n_failed = 0;
    std::int64_t n_valid = 0;
};

struct MapErrorStats {
    double mae = 0.0;
    double rmse = 0.0;
    std::int64_t n_compared = 0;
};

/// Voxelwise Logan V_T inside the mask; failures become NaN and are counted.
/// Parallelizes across voxels when threads > 1 with deterministic output.
ParametricMap parametric_map(const DynamicVolume& vol, const SampledCurve& cp, double t_star,
                             std::span<const std::uint8_t> mask, int threads = 1);

/// MAE / RMSE over voxels valid in both maps.
MapErrorStats map_error(std::span<const double> map, std::span<const double> reference);

/// Two-sided Wilcoxon signed-rank p via normal approximation with tie and
/// continuity corrections; zero differences are dropped. Callers apply any
/// multiple-comparison correction themselves.
double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// Two-sided Mann-Whitney U p via normal approximation with tie correction.
double mann_whitney_u(std::span<const double> x, std::span<const double> y);

}  // namespace dlif
