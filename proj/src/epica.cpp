#include "dlif/epica.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dlif/rng.hpp"
#include "linalg.hpp"

namespace dlif {

DecompositionInput build_decomposition_input(const DynamicVolume& vol,
                                             std::span<const std::uint8_t> mask) {
    if (mask.size() != static_cast<std::size_t>(vol.voxels()))
        throw std::invalid_argument("build_decomposition_input: mask size mismatch");
    DecompositionInput in;
    in.T = vol.grid.frames();
    std::vector<std::int64_t> keep;
    for (std::int64_t q = 0; q < vol.voxels(); ++q)
        if (mask[static_cast<std::size_t>(q)]) keep.push_back(q);
    in.V = static_cast<std::int64_t>(keep.size());
    if (in.V < in.T)
        throw std::invalid_argument("build_decomposition_input: fewer masked voxels than frames");

    in.X.resize(static_cast<std::size_t>(in.T) * keep.size());
    const std::int64_t nvox = vol.voxels();
    for (std::size_t c = 0; c < keep.size(); ++c) {
        double mean = 0.0;
        for (int t = 0; t < in.T; ++t) mean += vol.data[t * nvox + keep[c]];
        mean /= in.T;
        for (int t = 0; t < in.T; ++t)
            in.X[static_cast<std::size_t>(t) * keep.size() + c] =
                vol.data[t * nvox + keep[c]] - mean;
    }
    return in;
}

WhitenResult whiten(const DecompositionInput& input) {
    const int T = input.T;
    const auto V = input.V;
    // temporal covariance C = X X^T / V
    std::vector<double> cov(static_cast<std::size_t>(T) * T, 0.0);
    for (int i = 0; i < T; ++i) {
        const double* xi = input.X.data() + static_cast<std::size_t>(i) * V;
        for (int j = i; j < T; ++j) {
            const double* xj = input.X.data() + static_cast<std::size_t>(j) * V;
            double acc = 0.0;
            for (std::int64_t v = 0; v < V; ++v) acc += xi[v] * xj[v];
            cov[static_cast<std::size_t>(i) * T + j] = acc / static_cast<double>(V);
            cov[static_cast<std::size_t>(j) * T + i] = cov[static_cast<std::size_t>(i) * T + j];
        }
    }

    std::vector<double> evals, evecs;
    detail::jacobi_eigen_sym(T, cov, evals, evecs);

    std::vector<int> order(static_cast<std::size_t>(T));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return evals[a] > evals[b]; });

    const double lmax = evals[static_cast<std::size_t>(order[0])];
    std::vector<int> retained;
    for (int k : order)
        if (evals[static_cast<std::size_t>(k)] > 1e-8 * lmax && evals[static_cast<std::size_t>(k)] > 0.0)
            retained.push_back(k);
    if (retained.size() < 2) throw std::runtime_error("whiten: data rank below 2");

    WhitenResult out;
    out.T = T;
    out.V = V;
    out.rank = static_cast<int>(retained.size());
    out.Z.assign(static_cast<std::size_t>(out.rank) * V, 0.0);
    out.back.assign(static_cast<std::size_t>(T) * out.rank, 0.0);

    for (int r = 0; r < out.rank; ++r) {
        const int k = retained[static_cast<std::size_t>(r)];
        const double lam = evals[static_cast<std::size_t>(k)];
        const double inv_s = 1.0 / std::sqrt(lam);
        // row r of P = evec_k^T / sqrt(lam); back column r = evec_k * sqrt(lam)
        double* zr = out.Z.data() + static_cast<std::size_t>(r) * V;
        for (int t = 0; t < T; ++t) {
            const double e = evecs[static_cast<std::size_t>(t) * T + k];
            out.back[static_cast<std::size_t>(t) * out.rank + r] = e * std::sqrt(lam);
            const double w = e * inv_s;
            const double* xt = input.X.data() + static_cast<std::size_t>(t) * V;
            for (std::int64_t v = 0; v < V; ++v) zr[v] += w * xt[v];
        }
    }
    return out;
}

namespace {

/// W <- (W W^T)^{-1/2} W, W is n x r row-major
void symmetric_decorrelate(std::vector<double>& w, int n, int r) {
    std::vector<double> s(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < r; ++k)
                acc += w[static_cast<std::size_t>(i) * r + k] * w[static_cast<std::size_t>(j) * r + k];
            s[static_cast<std::size_t>(i) * n + j] = acc;
            s[static_cast<std::size_t>(j) * n + i] = acc;
        }
    std::vector<double> evals, evecs;
    detail::jacobi_eigen_sym(n, s, evals, evecs);

    // inv sqrt
    std::vector<double> isqrt(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                const double lam = std::max(evals[static_cast<std::size_t>(k)], 1e-300);
                acc += evecs[static_cast<std::size_t>(i) * n + k] *
                       evecs[static_cast<std::size_t>(j) * n + k] / std::sqrt(lam);
            }
            isqrt[static_cast<std::size_t>(i) * n + j] = acc;
        }

    std::vector<double> out(static_cast<std::size_t>(n) * r, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double a = isqrt[static_cast<std::size_t>(i) * n + k];
            for (int j = 0; j < r; ++j)
                out[static_cast<std::size_t>(i) * r + j] += a * w[static_cast<std::size_t>(k) * r + j];
        }
    w = std::move(out);
}

}  // namespace

std::vector<std::vector<double>> fast_ica(const WhitenResult& wh, const EpicaConfig& cfg,
                                          bool* converged) {
    const int n = cfg.n_components;
    const int r = wh.rank;
    const auto V = wh.V;
    if (n < 1 || n > r)
        throw std::invalid_argument("fast_ica: n_components must be in [1, rank=" +
                                    std::to_string(r) + "]");

    Rng rng(mix_seed(cfg.seed, 0x1caULL));
    std::vector<double> w(static_cast<std::size_t>(n) * r);
    for (auto& x : w) x = rng.normal();
    symmetric_decorrelate(w, n, r);

    bool ok = false;
    std::vector<double> y(static_cast<std::size_t>(n) * V);
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // Y = W Z
        std::fill(y.begin(), y.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            double* yi = y.data() + static_cast<std::size_t>(i) * V;
            for (int k = 0; k < r; ++k) {
                const double a = w[static_cast<std::size_t>(i) * r + k];
                const double* zk = wh.Z.data() + static_cast<std::size_t>(k) * V;
                for (std::int64_t v = 0; v < V; ++v) yi[v] += a * zk[v];
            }
        }

        std::vector<double> w_new(static_cast<std::size_t>(n) * r, 0.0);
        for (int i = 0; i < n; ++i) {
            double* yi = y.data() + static_cast<std::size_t>(i) * V;
            double gprime_mean = 0.0;
            for (std::int64_t v = 0; v < V; ++v) {
                const double g = std::tanh(yi[v]);
                gprime_mean += 1.0 - g * g;
                yi[v] = g;  // reuse the buffer for g(y)
            }
            gprime_mean /= static_cast<double>(V);
            for (int k = 0; k < r; ++k) {
                const double* zk = wh.Z.data() + static_cast<std::size_t>(k) * V;
                double acc = 0.0;
                for (std::int64_t v = 0; v < V; ++v) acc += yi[v] * zk[v];
                w_new[static_cast<std::size_t>(i) * r + k] =
                    acc / static_cast<double>(V) -
                    gprime_mean * w[static_cast<std::size_t>(i) * r + k];
            }
        }
        symmetric_decorrelate(w_new, n, r);

        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int k = 0; k < r; ++k)
                dot += w_new[static_cast<std::size_t>(i) * r + k] *
                       w[static_cast<std::size_t>(i) * r + k];
            worst = std::max(worst, std::fabs(std::fabs(dot) - 1.0));
        }
        w = std::move(w_new);
        if (worst < cfg.tol) {
            ok = true;
            break;
        }
    }
    if (converged) *converged = ok;

    // temporal curves: back (T x r) * w_i
    std::vector<std::vector<double>> comps;
    for (int i = 0; i < n; ++i) {
        std::vector<double> c(static_cast<std::size_t>(wh.T), 0.0);
        for (int t = 0; t < wh.T; ++t) {
            double acc = 0.0;
            for (int k = 0; k < r; ++k)
                acc += wh.back[static_cast<std::size_t>(t) * r + k] *
                       w[static_cast<std::size_t>(i) * r + k];
            c[static_cast<std::size_t>(t)] = acc;
        }
        comps.push_back(std::move(c));
    }
    return comps;
}

EpicaResult select_and_scale(const std::vector<std::vector<double>>& components,
                             const TimeGrid& grid, double reference_peak) {
    if (!(reference_peak > 0.0))
        throw std::invalid_argument("select_and_scale: reference peak must be positive");
    if (components.empty()) throw std::invalid_argument("select_and_scale: no components");

    EpicaResult res;
    res.components = components;
    for (auto& c : res.components) {
        const double mx = *std::max_element(c.begin(), c.end());
        const double mn = *std::min_element(c.begin(), c.end());
        if (-mn > mx)
            for (auto& v : c) v = -v;  // sign-fix: global max positive
    }

    const int T = grid.frames();
    auto peak_frame = [&](const std::vector<double>& c) {
        return static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
    };
    auto tail_ratio = [&](const std::vector<double>& c) {
        const int tail_start = 3 * T / 4;
        double tail = 0.0;
        for (int t = tail_start; t < T; ++t) tail += std::fabs(c[static_cast<std::size_t>(t)]);
        tail /= static_cast<double>(T - tail_start);
        const double peak = *std::max_element(c.begin(), c.end());
        return peak / (tail + 1e-12);
    };

    int best = 0;
    for (std::size_t i = 1; i < res.components.size(); ++i) {
        const int pf_best = peak_frame(res.components[static_cast<std::size_t>(best)]);
        const int pf_i = peak_frame(res.components[i]);
        if (pf_i < pf_best) {
            best = static_cast<int>(i);
        } else if (pf_i == pf_best) {
            res.tie_broken = true;
            if (tail_ratio(res.components[i]) >
                tail_ratio(res.components[static_cast<std::size_t>(best)]))
                best = static_cast<int>(i);
        }
    }
    res.plasma_index = best;
    res.uncalibrated = res.components[static_cast<std::size_t>(best)];

    const double mx = *std::max_element(res.uncalibrated.begin(), res.uncalibrated.end());
    if (!(mx > 0.0)) throw std::runtime_error("select_and_scale: selected component has no positive peak");
    std::vector<double> scaled(res.uncalibrated.size());
    for (std::size_t i = 0; i < scaled.size(); ++i)
        scaled[i] = (res.uncalibrated[i] / mx) * reference_peak;  // peak lands exactly on reference
    res.scaled = SampledCurve(grid, std::move(scaled));
    return res;
}

EpicaResult run_epica(const DynamicVolume& vol, std::span<const std::uint8_t> mask,
                      double reference_peak, const EpicaConfig& cfg) {
    const auto input = build_decomposition_input(vol, mask);
    const auto wh = whiten(input);
    bool converged = true;
    const auto comps = fast_ica(wh, cfg, &converged);
    EpicaResult res = select_and_scale(comps, vol.grid, reference_peak);
    res.converged = converged;
    return res;
}

}  // namespace dlif
