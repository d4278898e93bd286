#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlif/core.hpp"
#include "dlif/tensor.hpp"

namespace dlif {

/// Floor added after ReLU so scale parameters stay strictly positive.
inline constexpr double kScaleEpsilon = 1e-3;

inline double scale_activation(double raw) { return (raw > 0.0 ? raw : 0.0) + kScaleEpsilon; }

/// Superposition of K normalized Gaussians: sum_k w_k/(sigma_k sqrt(2pi)) *
/// exp(-(t-mu_k)^2 / (2 sigma_k^2)). sigma is stored post-activation (>= eps).
struct GaussianParams {
    std::vector<double> w;      // unconstrained weight
    std::vector<double> mu;     // location, minutes
    std::vector<double> sigma;  // scale, minutes, >= kScaleEpsilon

    int count() const { return static_cast<int>(w.size()); }
};

/// Superposition of K exponential bumps gated by a sigmoid so the curve is
/// smoothly zero before the bump: sum_k w_k lambda_k exp(-lambda_k (t-gamma_k)^2)
/// * sigmoid(eta_k (t-gamma_k)). lambda is stored post-activation (>= eps).
struct ExpSigmoidParams {
    std::vector<double> w;       // weight
    std::vector<double> lambda;  // scale, >= kScaleEpsilon
    std::vector<double> gamma;   // center, minutes
    std::vector<double> eta;     // sigmoid steepness

    int count() const { return static_cast<int>(w.size()); }
};

enum class BasisFamily { direct, gaussian, expsig };

std::string family_name(BasisFamily f);
BasisFamily family_from_name(const std::string& name);

/// A continuous (or frame-discrete) input-function estimate with an optional
/// amplitude factor applied pointwise last: DLIF(t) = alpha * unscaled(t).
struct ScaledAIF {
    BasisFamily family = BasisFamily::direct;
    std::optional<double> alpha;
    GaussianParams gauss;         // family == gaussian
    ExpSigmoidParams expsig;      // family == expsig
    std::vector<double> direct;   // family == direct, one value per frame

    /// continuous evaluation before alpha; direct family is frame-bound and throws
    double eval_unscaled(double t) const;

    std::string to_json() const;
    static ScaledAIF from_json(const std::string& text);
};

double eval_gaussian(const GaussianParams& p, double t);
double eval_expsig(const ExpSigmoidParams& p, double t);

/// Evaluate at frame midpoints, then apply alpha pointwise.
SampledCurve sample_on_grid(const ScaledAIF& aif, const TimeGrid& grid);

/// mean_t |a(t) - b(t)|
double l1_similarity(const SampledCurve& dlif, const SampledCurve& aif);

/// mean_k |w_k|
double sparsity_penalty(std::span<const double> weights);

// --- differentiable counterparts used while training ------------------------
// Parameter matrices hold post-activation scale columns.

/// params [K,3], columns (w, mu, sigma) -> curve at midpoints [T]
DiffTensor gaussian_curve(DiffTensor params, const TimeGrid& grid);
/// params [K,4], columns (w, lambda, gamma, eta) -> curve at midpoints [T]
DiffTensor expsig_curve(DiffTensor params, const TimeGrid& grid);
/// both [T]
DiffTensor l1_similarity(DiffTensor pred, DiffTensor target);
/// weights [K] or [K,1]
DiffTensor sparsity_penalty(DiffTensor weights);

}  // namespace dlif
