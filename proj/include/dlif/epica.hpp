#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dlif/core.hpp"

namespace dlif {

/// Masked voxel time-courses arranged T x V, each column mean-centered over
/// time, ready for temporal-covariance whitening.
struct DecompositionInput {
    int T = 0;
    std::int64_t V = 0;
    std::vector<double> X;  // row-major [T][V]
};

DecompositionInput build_decomposition_input(const DynamicVolume& vol,
                                             std::span<const std::uint8_t> mask);

/// PCA whitening of the T x T temporal covariance; components with eigenvalue
/// <= 1e-8 * lambda_max are dropped.
struct WhitenResult {
    int rank = 0;
    std::vector<double> Z;     // whitened data, [rank][V]
    std::vector<double> back;  // back-projection E D^{1/2}, [T][rank]
    std::int64_t V = 0;
    int T = 0;
};

WhitenResult whiten(const DecompositionInput& input);

struct EpicaConfig {
    int n_components = 3;  // plasma, tissue, noise
    int max_iter = 500;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

/// Symmetric fixed-point ICA with the log-cosh contrast on whitened data.
/// Returns temporal component curves (one per component, length T).
/// Sets *converged false (best iterate returned) when max_iter is exhausted.
std::vector<std::vector<double>> fast_ica(const WhitenResult& wh, const EpicaConfig& cfg,
                                          bool* converged);

struct EpicaResult {
    std::vector<std::vector<double>> components;  // sign-fixed temporal curves
    int plasma_index = -1;
    std::vector<double> uncalibrated;
    SampledCurve scaled;   // peak matched to the reference exactly
    bool tie_broken = false;
    bool converged = true;
};

/// Pick the component with the earliest time-to-peak (tie: higher
/// peak-to-tail ratio), sign-fixed, and scale its maximum to reference_peak.
EpicaResult select_and_scale(const std::vector<std::vector<double>>& components,
                             const TimeGrid& grid, double reference_peak);

/// whiten + ICA + select/scale in one call
EpicaResult run_epica(const DynamicVolume& vol, std::span<const std::uint8_t> mask,
                      double reference_peak, const EpicaConfig& cfg);

}  // namespace dlif
