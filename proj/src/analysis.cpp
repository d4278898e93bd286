#include "dlif/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace dlif {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730951); }

double two_sided_p(double z) {
    const double p = 2.0 * (1.0 - normal_cdf(std::fabs(z)));
    return std::min(1.0, std::max(0.0, p));
}

std::vector<int> frames_in_range(const TimeGrid& g, double t0, double t1) {
    std::vector<int> idx;
    for (int i = 0; i < g.frames(); ++i) {
        const double m = g.midpoint(i);
        if (m >= t0 && m < t1) idx.push_back(i);
    }
    return idx;
}

/// average ranks (1-based) with ties shared; returns sum of (t^3 - t) over tie groups
double rank_with_ties(std::span<const double> v, std::vector<double>& ranks) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    ranks.assign(n, 0.0);
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    return tie_term;
}

}  // namespace

double pearson_r(const SampledCurve& yhat, const SampledCurve& y) {
    require_same_grid(yhat, y, "pearson_r");
    const int n = y.frames();
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) {
        ma += yhat.values[i];
        mb += y.values[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = yhat.values[i] - ma;
        const double db = y.values[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::invalid_argument("pearson_r: constant curve has no defined correlation");
    return sab / (std::sqrt(saa) * std::sqrt(sbb));
}

double iou(const SampledCurve& yhat, const SampledCurve& y, double t0, double t1) {
    require_same_grid(yhat, y, "iou");
    const auto idx = frames_in_range(y.grid, t0, t1);
    if (idx.empty()) throw std::invalid_argument("iou: no frame midpoint in requested range");
    double mins = 0.0, maxs = 0.0;
    for (int i : idx) {
        mins += std::min(yhat.values[i], y.values[i]);
        maxs += std::max(yhat.values[i], y.values[i]);
    }
    if (maxs == 0.0) return mins == 0.0 ? 1.0 : 0.0;
    return mins / maxs;
}

double rmse(const SampledCurve& yhat, const SampledCurve& y, double t0, double t1) {
    require_same_grid(yhat, y, "rmse");
    const auto idx = frames_in_range(y.grid, t0, t1);
    if (idx.empty()) throw std::invalid_argument("rmse: no frame midpoint in requested range");
    double acc = 0.0;
    for (int i : idx) {
        const double d = yhat.values[i] - y.values[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(idx.size()));
}

double peak_bias(const SampledCurve& yhat, const SampledCurve& y) {
    require_same_grid(yhat, y, "peak_bias");
    const double py = y.peak();
    if (py <= 0.0) throw std::invalid_argument("peak_bias: target peak is not positive");
    return std::fabs(yhat.peak() - py) / py;
}

MetricsReport evaluate_curves(const SampledCurve& yhat, const SampledCurve& y) {
    const double inf = std::numeric_limits<double>::infinity();
    MetricsReport m;
    m.r = pearson_r(yhat, y);
    m.iou_early = iou(yhat, y, 0.0, kSegmentSplitMin);
    m.iou_late = iou(yhat, y, kSegmentSplitMin, inf);
    m.rmse_early = rmse(yhat, y, 0.0, kSegmentSplitMin);
    m.rmse_late = rmse(yhat, y, kSegmentSplitMin, inf);
    m.peak_bias = peak_bias(yhat, y);
    return m;
}

namespace {

/// cumulative trapezoid over (0, midpoints) with c(0)=0 anchor
std::vector<double> cumtrapz_from_zero(const SampledCurve& c) {
    const int n = c.frames();
    std::vector<double> out(static_cast<std::size_t>(n));
    double prev_t = 0.0, prev_v = 0.0, acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = c.grid.midpoint(i);
        acc += 0.5 * (prev_v + c.values[i]) * (t - prev_t);
        out[i] = acc;
        prev_t = t;
        prev_v = c.values[i];
    }
    return out;
}

}  // namespace

LoganResult logan_vt(const SampledCurve& ct, const SampledCurve& cp, double t_star) {
    require_same_grid(ct, cp, "logan_vt");
    const auto cum_ct = cumtrapz_from_zero(ct);
    const auto cum_cp = cumtrapz_from_zero(cp);

    std::vector<double> xs, ys;
    for (int i = 0; i < ct.frames(); ++i) {
        if (ct.grid.midpoint(i) < t_star) continue;
        if (!(ct.values[i] > 0.0))
            throw std::runtime_error("logan_vt: nonpositive tissue activity in frame " +
                                     std::to_string(i));
        xs.push_back(cum_cp[i] / ct.values[i]);
        ys.push_back(cum_ct[i] / ct.values[i]);
    }
    const auto n = static_cast<int>(xs.size());
    if (n < 2) throw std::runtime_error("logan_vt: fewer than 2 frames after t*");

    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::runtime_error("logan_vt: zero variance in normalized time");

    LoganResult res;
    res.vt = sxy / sxx;
    res.intercept = my - res.vt * mx;
    res.n_points = n;
    res.t_star = t_star;
    return res;
}

ParametricMap parametric_map(const DynamicVolume& vol, const SampledCurve& cp, double t_star,
                             std::span<const std::uint8_t> mask, int threads) {
    if (mask.size() != static_cast<std::size_t>(vol.voxels()))
        throw std::invalid_argument("parametric_map: mask size does not match volume");
    if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end())
        throw std::invalid_argument("parametric_map: empty mask");

    ParametricMap map;
    map.H = vol.H;
    map.W = vol.W;
    map.L = vol.L;
    const std::int64_t nvox = vol.voxels();
    map.vt.assign(static_cast<std::size_t>(nvox), std::numeric_limits<double>::quiet_NaN());

    const int nthreads = std::max(1, threads);
    std::vector<std::int64_t> failed(static_cast<std::size_t>(nthreads), 0);
    std::vector<std::int64_t> valid(static_cast<std::size_t>(nthreads), 0);

    auto work = [&](int tid) {
        const std::int64_t chunk = (nvox + nthreads - 1) / nthreads;
        const std::int64_t lo = tid * chunk;
        const std::int64_t hi = std::min(nvox, lo + chunk);
        for (std::int64_t q = lo; q < hi; ++q) {
            if (!mask[static_cast<std::size_t>(q)]) continue;
            SampledCurve tac(vol.grid, vol.tac(q));
            try {
                map.vt[static_cast<std::size_t>(q)] = logan_vt(tac, cp, t_star).vt;
                ++valid[static_cast<std::size_t>(tid)];
            } catch (const std::exception&) {
                ++failed[static_cast<std::size_t>(tid)];
            }
        }
    };

    if (nthreads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (int t = 0; t < nthreads; ++t) {
        map.n_failed += failed[static_cast<std::size_t>(t)];
        map.n_valid += valid[static_cast<std::size_t>(t)];
    }
    return map;
}

MapErrorStats map_error(std::span<const double> map, std::span<const double> reference) {
    if (map.size() != reference.size())
        throw std::invalid_argument("map_error: size mismatch");
    MapErrorStats s;
    double abs_acc = 0.0, sq_acc = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!std::isfinite(map[i]) || !std::isfinite(reference[i])) continue;
        const double d = map[i] - reference[i];
        abs_acc += std::fabs(d);
        sq_acc += d * d;
        ++s.n_compared;
    }
    if (s.n_compared == 0) throw std::runtime_error("map_error: no voxel valid in both maps");
    s.mae = abs_acc / static_cast<double>(s.n_compared);
    s.rmse = std::sqrt(sq_acc / static_cast<double>(s.n_compared));
    return s;
}

double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("wilcoxon_signed_rank: unpaired samples");
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    if (diff.empty()) throw std::invalid_argument("wilcoxon_signed_rank: all differences zero");
    const auto n = static_cast<double>(diff.size());
    if (diff.size() < 6)
        throw std::invalid_argument("wilcoxon_signed_rank: need >= 6 nonzero differences");

    std::vector<double> absd(diff.size());
    for (std::size_t i = 0; i < diff.size(); ++i) absd[i] = std::fabs(diff[i]);
    std::vector<double> ranks;
    const double tie_term = rank_with_ties(absd, ranks);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i)
        if (diff[i] > 0.0) w_plus += ranks[i];

    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) throw std::runtime_error("wilcoxon_signed_rank: degenerate variance");
    const double delta = w_plus - mean;
    const double cc = std::fabs(delta) <= 0.5 ? std::fabs(delta) : 0.5;  // continuity toward mean
    const double z = (std::fabs(delta) - cc) / std::sqrt(var);
    return two_sided_p(z);
}

double mann_whitney_u(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw std::invalid_argument("mann_whitney_u: empty group");
    if (x.size() < 3 || y.size() < 3)
        throw std::invalid_argument("mann_whitney_u: need >= 3 samples per group");
    const auto n1 = static_cast<double>(x.size());
    const auto n2 = static_cast<double>(y.size());
    const double nn = n1 + n2;

    std::vector<double> all(x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());
    std::vector<double> ranks;
    const double tie_term = rank_with_ties(all, ranks);

    double r1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r1 += ranks[i];
    const double u = r1 - n1 * (n1 + 1.0) / 2.0;

    const double mean = n1 * n2 / 2.0;
    const double var = (n1 * n2 / 12.0) * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0.0) throw std::runtime_error("mann_whitney_u: degenerate variance");
    const double delta = u - mean;
    const double cc = std::fabs(delta) <= 0.5 ? std::fabs(delta) : 0.5;
    const double z = (std::fabs(delta) - cc) / std::sqrt(var);
    return two_sided_p(z);
}

}  // namespace dlif
