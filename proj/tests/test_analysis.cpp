#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dlif/analysis.hpp"
#include "dlif/rng.hpp"
#include "dlif/sim.hpp"

using namespace dlif;

namespace {

SampledCurve curve(const TimeGrid& g, std::vector<double> v) {
    return SampledCurve(g, std::move(v));
}

TimeGrid tiny_grid(int n) {
    TimeGrid g;
    for (int i = 0; i < n; ++i) {
        g.starts.push_back(static_cast<double>(i));
        g.ends.push_back(static_cast<double>(i + 1));
    }
    return g;
}

// exact two-sided Wilcoxon signed-rank p by enumerating all sign assignments
double wilcoxon_exact(std::span<const double> a, std::span<const double> b) {
    std::vector<double> absd;
    std::vector<int> sign;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) {
            absd.push_back(std::fabs(d));
            sign.push_back(d > 0 ? 1 : -1);
        }
    }
    const int n = static_cast<int>(absd.size());
    // average ranks with ties
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return absd[x] < absd[y]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && absd[order[j + 1]] == absd[order[i]]) ++j;
        const double avg = 0.5 * (i + 1 + j + 1);
        for (int k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double w_obs = 0.0;
    for (int k = 0; k < n; ++k)
        if (sign[k] > 0) w_obs += rank[k];
    const double total = n * (n + 1) / 2.0;
    const double dev = std::fabs(w_obs - total / 2.0);

    long count = 0;
    const long lim = 1L << n;
    for (long m = 0; m < lim; ++m) {
        double w = 0.0;
        for (int k = 0; k < n; ++k)
            if (m & (1L << k)) w += rank[k];
        if (std::fabs(w - total / 2.0) >= dev - 1e-12) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(lim);
}

// exact two-sided Mann-Whitney p by enumerating group assignments
double mwu_exact(std::span<const double> x, std::span<const double> y) {
    const int n1 = static_cast<int>(x.size());
    const int n2 = static_cast<int>(y.size());
    const int nn = n1 + n2;
    std::vector<double> all(x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());

    auto u_of = [&](const std::vector<int>& grp) {
        double u = 0.0;
        for (int i = 0; i < nn; ++i)
            if (grp[i] == 0)
                for (int j = 0; j < nn; ++j)
                    if (grp[j] == 1) {
                        if (all[i] > all[j]) u += 1.0;
                        else if (all[i] == all[j]) u += 0.5;
                    }
        return u;
    };

    std::vector<int> obs(nn, 1);
    for (int i = 0; i < n1; ++i) obs[i] = 0;
    const double mean = n1 * n2 / 2.0;
    const double dev = std::fabs(u_of(obs) - mean);

    // enumerate all C(nn, n1) subsets
    std::vector<int> comb(n1);
    for (int i = 0; i < n1; ++i) comb[i] = i;
    long total = 0, count = 0;
    while (true) {
        std::vector<int> grp(nn, 1);
        for (int c : comb) grp[c] = 0;
        ++total;
        if (std::fabs(u_of(grp) - mean) >= dev - 1e-12) ++count;
        int k = n1 - 1;
        while (k >= 0 && comb[k] == nn - n1 + k) --k;
        if (k < 0) break;
        ++comb[k];
        for (int j = k + 1; j < n1; ++j) comb[j] = comb[j - 1] + 1;
    }
    return static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("pearson r basics") {
    auto g = tiny_grid(3);
    auto y = curve(g, {1, 2, 3});
    CHECK(pearson_r(y, y) == doctest::Approx(1.0));
    CHECK(pearson_r(curve(g, {3, 2, 1}), y) == doctest::Approx(-1.0));
    // affine invariance
    CHECK(pearson_r(curve(g, {2.5 * 1 + 4, 2.5 * 2 + 4, 2.5 * 3 + 4}), y) ==
          doctest::Approx(1.0));
    CHECK_THROWS(pearson_r(curve(g, {5, 5, 5}), y));
}

TEST_CASE("iou hand values and properties") {
    auto g = tiny_grid(2);
    auto a = curve(g, {1, 2});
    auto b = curve(g, {2, 1});
    CHECK(iou(a, b, 0, 10) == doctest::Approx(0.5));
    CHECK(iou(a, a, 0, 10) == doctest::Approx(1.0));

    auto two = curve(g, {2, 4});
    CHECK(iou(two, a, 0, 10) == doctest::Approx(0.5));  // yhat = 2y
    CHECK(iou(a, two, 0, 10) == doctest::Approx(iou(two, a, 0, 10)));  // symmetry

    auto z = curve(g, {0, 0});
    CHECK(iou(z, z, 0, 10) == 1.0);
    CHECK(iou(z, a, 0, 10) == 0.0);
}

TEST_CASE("rmse hand values") {
    auto g = tiny_grid(2);
    CHECK(rmse(curve(g, {0, 2}), curve(g, {1, 1}), 0, 10) == doctest::Approx(1.0));
    auto a = curve(g, {1, 2});
    CHECK(rmse(a, a, 0, 10) == 0.0);
    CHECK(rmse(curve(g, {4, 5}), a, 0, 10) == doctest::Approx(3.0));
}

TEST_CASE("peak bias values and shift insensitivity") {
    auto g = tiny_grid(4);
    auto y = curve(g, {0, 1, 0.5, 0.2});
    CHECK(peak_bias(y, y) == 0.0);
    CHECK(peak_bias(curve(g, {0, 1.5, 0.5, 0.2}), y) == doctest::Approx(0.5));
    // shifting the peak by one frame leaves the bias unchanged
    CHECK(peak_bias(curve(g, {1.5, 0, 0.5, 0.2}), y) == doctest::Approx(0.5));
    CHECK_THROWS(peak_bias(y, curve(g, {0, 0, 0, 0})));
}

TEST_CASE("logan identity and scaling") {
    TimeGrid g = TimeGrid::default_30x90();
    FengAIF p{30.0, 0.8, 0.4, 4.0, 0.1, 0.01, 0.5};
    auto cp_fine = gen_aif_fine(p, 0.005, 90.0);
    auto cp = sample_fine(cp_fine, g);

    // ct = cp: both integrals identical -> slope 1, intercept 0
    auto self = logan_vt(cp, cp, 30.0);
    CHECK(self.vt == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self.intercept == doctest::Approx(0.0).epsilon(1e-9));

    auto ct = tissue_tac(cp_fine, 0.1, 0.05, g);
    auto base = logan_vt(ct, cp, 30.0);
    // scaling cp by c scales V_T by 1/c
    SampledCurve cp2 = cp;
    for (auto& v : cp2.values) v *= 2.0;
    auto halved = logan_vt(ct, cp2, 30.0);
    CHECK(halved.vt == doctest::Approx(base.vt / 2.0).epsilon(1e-9));

    // 1TCM oracle at the spec's example point
    CHECK(std::fabs(base.vt - 2.0) / 2.0 < 0.02);
}

TEST_CASE("logan error paths") {
    TimeGrid g = TimeGrid::default_30x90();
    SampledCurve cp(g, std::vector<double>(30, 1.0));
    std::vector<double> v(30, 1.0);
    v[25] = 0.0;  // nonpositive tissue activity after t*
    CHECK_THROWS(logan_vt(SampledCurve(g, v), cp, 30.0));
    CHECK_THROWS(logan_vt(cp, cp, 89.0));  //< 2 frames after t*
}

TEST_CASE("parametric map on a noiseless phantom matches region V_T") {
    SimConfig cfg;
    cfg.dims = 16;
    cfg.noise_sigma0 = 0.0;
    // make blood negligible so the voxel model is almost pure 1TCM
    cfg.f_b_tissue = {0.0, 0.0};
    cfg.f_b_vessel = {0.0, 0.0};
    Subject s = make_subject(cfg, 5, 0);

    auto map = parametric_map(s.volume, s.aif, 30.0, s.volume.mask, 2);
    auto ref = reference_vt_map(s);
    double worst = 0.0;
    for (std::size_t q = 0; q < ref.size(); ++q) {
        if (!std::isfinite(ref[q]) || !std::isfinite(map.vt[q])) continue;
        worst = std::max(worst, std::fabs(map.vt[q] - ref[q]) / ref[q]);
    }
    CHECK(map.n_valid > 0);
    CHECK(worst < 0.03);

    auto self_err = map_error(map.vt, map.vt);
    CHECK(self_err.mae == 0.0);
    CHECK(self_err.rmse == 0.0);

    auto err = map_error(map.vt, ref);
    CHECK(err.mae <= err.rmse);  // power-mean inequality
}

TEST_CASE("wilcoxon extreme, symmetric, and calibrated") {
    std::vector<double> a(20), b(20);
    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
        b[i] = rng.uniform(0.0, 1.0);
        a[i] = b[i] + 10.0;
    }
    CHECK(wilcoxon_signed_rank(a, b) < 1e-3);
    CHECK(wilcoxon_signed_rank(a, b) == wilcoxon_signed_rank(b, a));

    std::vector<double> same = {1, 2, 3, 4, 5, 6};
    CHECK_THROWS(wilcoxon_signed_rank(same, same));

    // independent same-distribution samples: median p over trials is central
    std::vector<double> ps;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(50), y(50);
        for (int i = 0; i < 50; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        ps.push_back(wilcoxon_signed_rank(x, y));
    }
    std::nth_element(ps.begin(), ps.begin() + 100, ps.end());
    CHECK(ps[100] > 0.3);
    CHECK(ps[100] < 0.7);
}

TEST_CASE("mann-whitney extreme, identical, and exchange symmetry") {
    Rng rng(13);
    std::vector<double> x(30), y(30);
    for (int i = 0; i < 30; ++i) {
        y[i] = rng.normal();
        x[i] = y[i] + 10.0;
    }
    CHECK(mann_whitney_u(x, y) < 1e-6);
    CHECK(mann_whitney_u(x, y) == mann_whitney_u(y, x));

    std::vector<double> eq = {1, 2, 3, 4, 5};
    CHECK(mann_whitney_u(eq, eq) >= 0.99);

    std::vector<double> tiny = {1, 2};
    CHECK_THROWS(mann_whitney_u(tiny, eq));
}

TEST_CASE("normal approximations track exact enumeration for small n") {
    Rng rng(77);
    double worst_w = 0.0, worst_u = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 8 + static_cast<int>(rng.uniform_int(0, 2));
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal() + 0.4;
        }
        worst_w = std::max(worst_w,
                           std::fabs(wilcoxon_signed_rank(a, b) - wilcoxon_exact(a, b)));

        std::vector<double> x(6), y(7);
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.normal() + 0.3;
        worst_u = std::max(worst_u, std::fabs(mann_whitney_u(x, y) - mwu_exact(x, y)));
    }
    CHECK(worst_w < 0.02);
    CHECK(worst_u < 0.02);
}
