#include <doctest.h>

#include <cmath>

#include "dlif/basis.hpp"
#include "dlif/rng.hpp"

using namespace dlif;

TEST_CASE("single gaussian peak value") {
    GaussianParams p;
    p.w = {1.0};
    p.mu = {0.0};
    p.sigma = {1.0};
    CHECK(eval_gaussian(p, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("zero weights give the zero curve") {
    GaussianParams g;
    g.w = {0.0, 0.0};
    g.mu = {1.0, 5.0};
    g.sigma = {1.0, 2.0};
    ExpSigmoidParams e;
    e.w = {0.0};
    e.lambda = {1.0};
    e.gamma = {3.0};
    e.eta = {1.0};
    for (double t : {-1.0, 0.0, 2.5, 90.0}) {
        CHECK(eval_gaussian(g, t) == 0.0);
        CHECK(eval_expsig(e, t) == 0.0);
    }
}

TEST_CASE("symmetric gaussian pair doubles the single value") {
    GaussianParams pair;
    pair.w = {1.0, 1.0};
    pair.mu = {-1.0, 1.0};
    pair.sigma = {0.7, 0.7};
    GaussianParams single;
    single.w = {1.0};
    single.mu = {1.0};
    single.sigma = {0.7};
    CHECK(eval_gaussian(pair, 0.0) ==
          doctest::Approx(2.0 * eval_gaussian(single, 0.0)).epsilon(1e-14));
}

TEST_CASE("expsig center value is w*lambda/2") {
    ExpSigmoidParams p;
    p.w = {2.0};
    p.lambda = {1.0};
    p.gamma = {0.0};
    p.eta = {1.0};
    CHECK(eval_expsig(p, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("expsig underflows to zero left of a steep gate") {
    ExpSigmoidParams p;
    p.w = {1.0};
    p.lambda = {1.0};
    p.gamma = {0.0};
    p.eta = {1e3};
    CHECK(eval_expsig(p, -1.0) < 1e-300);
}

TEST_CASE("scale activation floors at epsilon") {
    CHECK(scale_activation(-7.0) == kScaleEpsilon);
    CHECK(scale_activation(0.0) == kScaleEpsilon);
    CHECK(scale_activation(2.0) == 2.0 + kScaleEpsilon);
}

TEST_CASE("alpha scales samples exactly and bitwise") {
    TimeGrid grid = TimeGrid::default_30x90();
    ScaledAIF aif;
    aif.family = BasisFamily::gaussian;
    aif.gauss.w = {3.0, 1.0};
    aif.gauss.mu = {1.0, 20.0};
    aif.gauss.sigma = {0.5, 10.0};

    auto unscaled = sample_on_grid(aif, grid);
    aif.alpha = 1.0;
    auto a1 = sample_on_grid(aif, grid);
    CHECK(a1.values == unscaled.values);

    aif.alpha = 2.0;
    auto a2 = sample_on_grid(aif, grid);
    for (int i = 0; i < grid.frames(); ++i)
        CHECK(a2.values[i] == 2.0 * unscaled.values[i]);  // bitwise, same multiply
}

TEST_CASE("l1 similarity hand values") {
    TimeGrid g;
    g.starts = {0.0, 1.0};
    g.ends = {1.0, 2.0};
    SampledCurve a(g, {0.0, 2.0});
    SampledCurve b(g, {1.0, 1.0});
    CHECK(l1_similarity(a, b) == doctest::Approx(1.0));
    CHECK(l1_similarity(a, a) == 0.0);
    SampledCurve c(g, {1.0, 3.0});
    CHECK(l1_similarity(c, a) == doctest::Approx(1.0));

    TimeGrid other;
    other.starts = {0.0, 2.0};
    other.ends = {2.0, 4.0};
    SampledCurve d(other, {0.0, 0.0});
    CHECK_THROWS(l1_similarity(a, d));
}

TEST_CASE("sparsity penalty hand values and homogeneity") {
    std::vector<double> w = {1.0, -1.0, 2.0};
    CHECK(sparsity_penalty(w) == doctest::Approx(4.0 / 3.0));
    std::vector<double> zero = {0.0, 0.0};
    CHECK(sparsity_penalty(zero) == 0.0);
    std::vector<double> scaled = {-3.0, 3.0, -6.0};
    CHECK(sparsity_penalty(scaled) == doctest::Approx(3.0 * sparsity_penalty(w)));
}

TEST_CASE("json round trip") {
    ScaledAIF aif;
    aif.family = BasisFamily::expsig;
    aif.alpha = 1.75;
    aif.expsig.w = {1.5, -0.25};
    aif.expsig.lambda = {0.8, 0.1};
    aif.expsig.gamma = {1.0, 30.0};
    aif.expsig.eta = {5.0, 0.3};

    auto back = ScaledAIF::from_json(aif.to_json());
    CHECK(back.family == BasisFamily::expsig);
    CHECK(back.alpha.has_value());
    CHECK(*back.alpha == 1.75);
    CHECK(back.expsig.w == aif.expsig.w);
    CHECK(back.expsig.lambda == aif.expsig.lambda);
    CHECK(back.expsig.gamma == aif.expsig.gamma);
    CHECK(back.expsig.eta == aif.expsig.eta);

    ScaledAIF direct;
    direct.family = BasisFamily::direct;
    direct.direct = {0.0, 1.5, 0.25};
    auto dback = ScaledAIF::from_json(direct.to_json());
    CHECK(dback.direct == direct.direct);
    CHECK(!dback.alpha.has_value());
}

TEST_CASE("graph curves match the plain evaluators") {
    TimeGrid grid = TimeGrid::default_30x90();
    Rng rng(3);

    GaussianParams gp;
    for (int k = 0; k < 5; ++k) {
        gp.w.push_back(rng.uniform(-1.0, 3.0));
        gp.mu.push_back(rng.uniform(0.0, 90.0));
        gp.sigma.push_back(rng.uniform(0.3, 12.0));
    }
    {
        Tape t;
        std::vector<double> flat;
        for (int k = 0; k < 5; ++k) {
            flat.push_back(gp.w[k]);
            flat.push_back(gp.mu[k]);
            flat.push_back(gp.sigma[k]);
        }
        auto params = t.leaf({5, 3}, flat);
        auto curve = gaussian_curve(params, grid);
        for (int i = 0; i < grid.frames(); ++i)
            CHECK(curve.value()[i] ==
                  doctest::Approx(eval_gaussian(gp, grid.midpoint(i))).epsilon(1e-12));
    }

    ExpSigmoidParams ep;
    for (int k = 0; k < 4; ++k) {
        ep.w.push_back(rng.uniform(-1.0, 3.0));
        ep.lambda.push_back(rng.uniform(0.05, 2.0));
        ep.gamma.push_back(rng.uniform(0.0, 90.0));
        ep.eta.push_back(rng.uniform(-2.0, 6.0));
    }
    {
        Tape t;
        std::vector<double> flat;
        for (int k = 0; k < 4; ++k) {
            flat.push_back(ep.w[k]);
            flat.push_back(ep.lambda[k]);
            flat.push_back(ep.gamma[k]);
            flat.push_back(ep.eta[k]);
        }
        auto params = t.leaf({4, 4}, flat);
        auto curve = expsig_curve(params, grid);
        for (int i = 0; i < grid.frames(); ++i)
            CHECK(curve.value()[i] ==
                  doctest::Approx(eval_expsig(ep, grid.midpoint(i))).epsilon(1e-12));
    }
}

TEST_CASE("loss graph gradients pass finite differences") {
    // total loss L + lambda*R w.r.t. all basis parameters
    TimeGrid grid = TimeGrid::default_30x90();
    Rng rng(17);
    std::vector<double> target(30);
    for (auto& v : target) v = rng.uniform(0.0, 3.0);

    std::vector<double> x0;
    for (int k = 0; k < 4; ++k) {
        x0.push_back(rng.uniform(0.5, 2.0));    // w
        x0.push_back(rng.uniform(1.0, 80.0));   // mu
        x0.push_back(rng.uniform(1.0, 8.0));    // sigma
    }
    double err = grad_check(
        [&](Tape& t, DiffTensor x) {
            auto params = reshape(x, {4, 3});
            auto curve = gaussian_curve(params, grid);
            auto tgt = t.leaf({30}, target);
            auto w = slice(params, 1, 0, 1);
            return add(l1_similarity(curve, tgt), mul_scalar(sparsity_penalty(w), 0.01));
        },
        {12}, x0, 1e-4);
    CHECK(err < 1e-5);

    std::vector<double> e0;
    for (int k = 0; k < 4; ++k) {
        e0.push_back(rng.uniform(0.5, 2.0));    // w
        e0.push_back(rng.uniform(0.1, 1.5));    // lambda
        e0.push_back(rng.uniform(1.0, 80.0));   // gamma
        e0.push_back(rng.uniform(0.2, 3.0));    // eta
    }
    double err2 = grad_check(
        [&](Tape& t, DiffTensor x) {
            auto params = reshape(x, {4, 4});
            auto curve = expsig_curve(params, grid);
            auto tgt = t.leaf({30}, target);
            auto w = slice(params, 1, 0, 1);
            return add(l1_similarity(curve, tgt), mul_scalar(sparsity_penalty(w), 0.01));
        },
        {16}, e0, 1e-4);
    CHECK(err2 < 1e-5);
}

TEST_CASE("delta-like gaussians on the grid reproduce any target curve") {
    // K = T narrow gaussians centered at the midpoints, weights solved so the
    // mixture hits the target samples (the design matrix is near-identity)
    TimeGrid grid = TimeGrid::default_30x90();
    Rng rng(41);
    std::vector<double> target(30);
    for (auto& v : target) v = rng.uniform(0.1, 5.0);

    GaussianParams p;
    const double sigma = kScaleEpsilon;
    const double amp = 1.0 / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
    for (int k = 0; k < 30; ++k) {
        p.mu.push_back(grid.midpoint(k));
        p.sigma.push_back(sigma);
        p.w.push_back(target[k] / amp);
    }
    for (int i = 0; i < 30; ++i)
        CHECK(std::fabs(eval_gaussian(p, grid.midpoint(i)) - target[i]) < 1e-6);
}
