#include "dlif/basis.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dlif {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string family_name(BasisFamily f) {
    switch (f) {
        case BasisFamily::direct: return "direct";
        case BasisFamily::gaussian: return "gaussian";
        default: return "expsig";
    }
}

BasisFamily family_from_name(const std::string& name) {
    if (name == "direct") return BasisFamily::direct;
    if (name == "gaussian") return BasisFamily::gaussian;
    if (name == "expsig") return BasisFamily::expsig;
    throw std::invalid_argument("unknown basis family: " + name);
}

double eval_gaussian(const GaussianParams& p, double t) {
    double acc = 0.0;
    for (int k = 0; k < p.count(); ++k) {
        const double d = t - p.mu[k];
        acc += p.w[k] / (p.sigma[k] * kSqrt2Pi) *
               std::exp(-d * d / (2.0 * p.sigma[k] * p.sigma[k]));
    }
    return acc;
}

double eval_expsig(const ExpSigmoidParams& p, double t) {
    double acc = 0.0;
    for (int k = 0; k < p.count(); ++k) {
        const double d = t - p.gamma[k];
        acc += p.w[k] * p.lambda[k] * std::exp(-p.lambda[k] * d * d) *
               stable_sigmoid(p.eta[k] * d);
    }
    return acc;
}

double ScaledAIF::eval_unscaled(double t) const {
    switch (family) {
        case BasisFamily::gaussian: return eval_gaussian(gauss, t);
        case BasisFamily::expsig: return eval_expsig(expsig, t);
        default:
            throw std::logic_error("direct estimates have no continuous form");
    }
}

SampledCurve sample_on_grid(const ScaledAIF& aif, const TimeGrid& grid) {
    const int T = grid.frames();
    std::vector<double> v(static_cast<std::size_t>(T));
    if (aif.family == BasisFamily::direct) {
        if (static_cast<int>(aif.direct.size()) != T)
            throw std::invalid_argument("sample_on_grid: direct estimate has " +
                                        std::to_string(aif.direct.size()) + " values, grid has " +
                                        std::to_string(T) + " frames");
        v = aif.direct;
    } else {
        for (int i = 0; i < T; ++i) v[i] = aif.eval_unscaled(grid.midpoint(i));
    }
    if (aif.alpha) {
        const double a = *aif.alpha;
        for (auto& x : v) x = a * x;
    }
    return SampledCurve(grid, std::move(v));
}

double l1_similarity(const SampledCurve& dlif, const SampledCurve& aif) {
    require_same_grid(dlif, aif, "l1_similarity");
    double acc = 0.0;
    for (int i = 0; i < dlif.frames(); ++i) acc += std::fabs(dlif.values[i] - aif.values[i]);
    return acc / dlif.frames();
}

double sparsity_penalty(std::span<const double> weights) {
    if (weights.empty()) throw std::invalid_argument("sparsity_penalty: no weights");
    double acc = 0.0;
    for (double w : weights) acc += std::fabs(w);
    return acc / static_cast<double>(weights.size());
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

std::string ScaledAIF::to_json() const {
    nlohmann::ordered_json j;
    j["family"] = family_name(family);
    if (alpha)
        j["alpha"] = *alpha;
    else
        j["alpha"] = nullptr;
    auto& rows = j["params"] = nlohmann::json::array();
    switch (family) {
        case BasisFamily::direct:
            for (double v : direct) rows.push_back({v});
            break;
        case BasisFamily::gaussian:
            for (int k = 0; k < gauss.count(); ++k)
                rows.push_back({gauss.w[k], gauss.mu[k], gauss.sigma[k]});
            break;
        case BasisFamily::expsig:
            for (int k = 0; k < expsig.count(); ++k)
                rows.push_back({expsig.w[k], expsig.lambda[k], expsig.gamma[k], expsig.eta[k]});
            break;
    }
    return j.dump();
}

ScaledAIF ScaledAIF::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ScaledAIF out;
    out.family = family_from_name(j.at("family").get<std::string>());
    if (!j.at("alpha").is_null()) out.alpha = j.at("alpha").get<double>();
    const auto& rows = j.at("params");
    const std::size_t arity = out.family == BasisFamily::direct  ? 1
                              : out.family == BasisFamily::gaussian ? 3
                                                                    : 4;
    for (const auto& row : rows) {
        if (row.size() != arity)
            throw std::invalid_argument("ScaledAIF: expected " + std::to_string(arity) +
                                        "-tuples for family " + family_name(out.family));
        switch (out.family) {
            case BasisFamily::direct:
                out.direct.push_back(row[0].get<double>());
                break;
            case BasisFamily::gaussian:
                out.gauss.w.push_back(row[0].get<double>());
                out.gauss.mu.push_back(row[1].get<double>());
                out.gauss.sigma.push_back(row[2].get<double>());
                break;
            case BasisFamily::expsig:
                out.expsig.w.push_back(row[0].get<double>());
                out.expsig.lambda.push_back(row[1].get<double>());
                out.expsig.gamma.push_back(row[2].get<double>());
                out.expsig.eta.push_back(row[3].get<double>());
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// differentiable forms (built from tensor primitives so the head parameters
// receive gradients through the sampled curve)
// ---------------------------------------------------------------------------

namespace {

DiffTensor midpoint_row(Tape& tape, const TimeGrid& grid) {
    return tape.leaf({1, grid.frames()}, grid.midpoints(), false);
}

}  // namespace

DiffTensor gaussian_curve(DiffTensor params, const TimeGrid& grid) {
    if (params.shape().size() != 2 || params.shape()[1] != 3)
        throw std::invalid_argument("gaussian_curve: expected [K,3] params, got " +
                                    shape_str(params.shape()));
    Tape& tape = *params.tape();
    auto w = slice(params, 1, 0, 1);      // [K,1]
    auto mu = slice(params, 1, 1, 1);     // [K,1]
    auto sigma = slice(params, 1, 2, 1);  // [K,1]
    auto tm = midpoint_row(tape, grid);   // [1,T]

    auto d = sub(tm, mu);                                            // [K,T]
    auto quad = div(mul(d, d), mul_scalar(mul(sigma, sigma), 2.0));  // [K,T]
    auto bump = exp(neg(quad));
    auto amp = div(w, mul_scalar(sigma, kSqrt2Pi));  // [K,1]
    return sum_axis(mul(amp, bump), 0, false);       // [T]
}

DiffTensor expsig_curve(DiffTensor params, const TimeGrid& grid) {
    if (params.shape().size() != 2 || params.shape()[1] != 4)
        throw std::invalid_argument("expsig_curve: expected [K,4] params, got " +
                                    shape_str(params.shape()));
    Tape& tape = *params.tape();
    auto w = slice(params, 1, 0, 1);
    auto lambda = slice(params, 1, 1, 1);
    auto gamma = slice(params, 1, 2, 1);
    auto eta = slice(params, 1, 3, 1);
    auto tm = midpoint_row(tape, grid);

    auto d = sub(tm, gamma);                  // [K,T]
    auto bump = exp(neg(mul(lambda, mul(d, d))));
    auto gate = sigmoid(mul(eta, d));
    auto amp = mul(w, lambda);                // [K,1]
    return sum_axis(mul(amp, mul(bump, gate)), 0, false);
}

DiffTensor l1_similarity(DiffTensor pred, DiffTensor target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("l1_similarity: shape mismatch " + shape_str(pred.shape()) +
                                    " vs " + shape_str(target.shape()));
    return mean(abs(sub(pred, target)));
}

DiffTensor sparsity_penalty(DiffTensor weights) {
    return mean(abs(weights));
}

}  // namespace dlif
