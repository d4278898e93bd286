#include "dlif/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace dlif {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DLIF_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

Adam::Adam(const ParamStore& store, const TrainConfig& cfg)
    : lr_(cfg.lr), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
    for (const auto& p : store.all()) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step(ParamStore& store, const std::vector<std::vector<double>>& grads) {
    const auto& params = store.all();
    if (grads.size() != params.size())
        throw std::invalid_argument("Adam: gradient count does not match parameter count");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = grads[i];
        for (double gv : g)
            if (!std::isfinite(gv))
                throw std::runtime_error("Adam: non-finite gradient for parameter " + p.name);
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < g.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void flip_volume(DynamicVolume& vol, bool flip_z, bool flip_y, bool flip_x) {
    if (!flip_z && !flip_y && !flip_x) return;
    const int T = vol.grid.frames();
    std::vector<double> out(vol.data.size());
    for (int t = 0; t < T; ++t)
        for (int z = 0; z < vol.H; ++z)
            for (int y = 0; y < vol.W; ++y)
                for (int x = 0; x < vol.L; ++x) {
                    const int sz = flip_z ? vol.H - 1 - z : z;
                    const int sy = flip_y ? vol.W - 1 - y : y;
                    const int sx = flip_x ? vol.L - 1 - x : x;
                    out[static_cast<std::size_t>(vol.flat(t, z, y, x))] = vol.at(t, sz, sy, sx);
                }
    vol.data = std::move(out);
    if (!vol.mask.empty()) {
        std::vector<std::uint8_t> m(vol.mask.size());
        for (int z = 0; z < vol.H; ++z)
            for (int y = 0; y < vol.W; ++y)
                for (int x = 0; x < vol.L; ++x) {
                    const int sz = flip_z ? vol.H - 1 - z : z;
                    const int sy = flip_y ? vol.W - 1 - y : y;
                    const int sx = flip_x ? vol.L - 1 - x : x;
                    m[(static_cast<std::size_t>(z) * vol.W + y) * vol.L + x] =
                        vol.mask[(static_cast<std::size_t>(sz) * vol.W + sy) * vol.L + sx];
                }
        vol.mask = std::move(m);
    }
}

DynamicVolume augment_flip(const DynamicVolume& vol, Rng& rng) {
    const bool fz = rng.bernoulli(0.5);
    const bool fy = rng.bernoulli(0.5);
    const bool fx = rng.bernoulli(0.5);
    DynamicVolume out = vol;
    flip_volume(out, fz, fy, fx);
    return out;
}

Checkpoint Checkpoint::capture(const DlifModel& model, int epoch, double running_loss,
                               std::uint64_t seed_state) {
    Checkpoint ck;
    ck.model_cfg = model.config();
    ck.epoch = epoch;
    ck.running_loss = running_loss;
    ck.seed_state = seed_state;
    std::int64_t offset = 0;
    for (const auto& p : model.params().all()) {
        ck.manifest.push_back({p->name, p->shape, offset});
        for (double v : p->value) ck.blob.push_back(static_cast<float>(v));
        offset += p->size();
    }
    return ck;
}

void Checkpoint::restore_into(DlifModel& model) const {
    const auto& params = model.params().all();
    if (params.size() != manifest.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (" +
                                 std::to_string(manifest.size()) + " stored, model has " +
                                 std::to_string(params.size()) + ")");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = manifest[i];
        auto& p = *params[i];
        if (entry.name != p.name || entry.shape != p.shape)
            throw std::runtime_error("checkpoint: parameter " + entry.name +
                                     " does not match model parameter " + p.name);
        if (entry.offset + p.size() > static_cast<std::int64_t>(blob.size()))
            throw std::runtime_error("checkpoint: blob too short for " + entry.name);
        for (std::int64_t j = 0; j < p.size(); ++j)
            p.value[static_cast<std::size_t>(j)] =
                static_cast<double>(blob[static_cast<std::size_t>(entry.offset + j)]);
    }
}

std::vector<TrainLogRow> train_model(DlifModel& model, std::span<const TrainSample> data,
                                     const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_model: no training samples");
    Adam opt(model.params(), cfg);
    Rng rng(mix_seed(cfg.seed, 0x7261696eULL));  // order + flip draws

    std::vector<TrainLogRow> log;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    int step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const TrainSample& sample = data[idx];
            GraphContext ctx(/*train=*/true);
            DlifModel::LossParts parts;
            DiffTensor total;
            if (cfg.augment_flips) {
                const DynamicVolume flipped = augment_flip(sample.down, rng);
                auto out = model.forward(ctx, flipped);
                total = model.loss(ctx, out, sample.target, &parts);
            } else {
                auto out = model.forward(ctx, sample.down);
                total = model.loss(ctx, out, sample.target, &parts);
            }
            const double loss_value = total.item();
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train_model: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step) +
                                         " (subject " + sample.id + ")");
            ctx.tape().backward(total);

            std::vector<std::vector<double>> grads;
            grads.reserve(model.params().all().size());
            for (const auto& p : model.params().all()) grads.push_back(ctx.grad_of(*p));
            opt.step(model.params(), grads);

            ++step;
            log.push_back({epoch, step, loss_value, parts.l1, parts.sparsity});
        }
    }
    return log;
}

int active_weight_count(std::span<const double> w, double rel_threshold) {
    double max_abs = 0.0;
    for (double v : w) max_abs = std::max(max_abs, std::fabs(v));
    if (max_abs == 0.0) return 0;
    int n = 0;
    for (double v : w)
        if (std::fabs(v) > rel_threshold * max_abs) ++n;
    return n;
}

int active_weight_count(const ScaledAIF& aif, double rel_threshold) {
    switch (aif.family) {
        case BasisFamily::gaussian: return active_weight_count(aif.gauss.w, rel_threshold);
        case BasisFamily::expsig: return active_weight_count(aif.expsig.w, rel_threshold);
        default: return -1;
    }
}

CvResult cross_validate(std::span<const TrainSample> cohort, const ModelConfig& mcfg,
                        const TrainConfig& tcfg) {
    mcfg.validate();
    if (static_cast<int>(cohort.size()) < tcfg.folds)
        throw std::invalid_argument("cross_validate: need at least one subject per fold");
    if (tcfg.folds < 2) throw std::invalid_argument("cross_validate: folds must be >= 2");

    // deterministic partition: seeded shuffle, then position mod folds
    std::vector<std::size_t> order(cohort.size());
    std::iota(order.begin(), order.end(), 0);
    Rng fold_rng(mix_seed(tcfg.seed, 0xf01d5ULL));
    fold_rng.shuffle(order);
    std::vector<int> fold_of(cohort.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        fold_of[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(tcfg.folds));

    CvResult result;
    result.model_cfg = mcfg;
    result.train_cfg = tcfg;
    result.folds.resize(static_cast<std::size_t>(tcfg.folds));

    auto run_fold = [&](int fold) {
        std::vector<TrainSample> train_set;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            if (fold_of[i] == fold)
                test_idx.push_back(i);
            else
                train_set.push_back(cohort[i]);
        }
        if (test_idx.empty() || train_set.empty())
            throw std::runtime_error("cross_validate: empty fold " + std::to_string(fold));

        DlifModel model(mcfg, mix_seed(tcfg.seed, 1000 + static_cast<std::uint64_t>(fold)));
        TrainConfig fold_cfg = tcfg;
        fold_cfg.seed = mix_seed(tcfg.seed, 2000 + static_cast<std::uint64_t>(fold));

        FoldResult fr;
        fr.fold = fold;
        fr.log = train_model(model, train_set, fold_cfg);
        const double last_loss = fr.log.empty() ? 0.0 : fr.log.back().loss;
        fr.checkpoint = Checkpoint::capture(model, fold_cfg.epochs, last_loss, fold_cfg.seed);

        for (std::size_t i : test_idx) {
            const TrainSample& s = cohort[i];
            ScaledAIF est = model.estimate(s.down);
            SampledCurve sampled = sample_on_grid(est, mcfg.grid);
            SubjectMetrics sm;
            sm.id = s.id;
            sm.cohort = s.cohort;
            sm.fold = fold;
            sm.metrics = evaluate_curves(sampled, s.target);
            sm.active_weights = active_weight_count(est);
            fr.test_metrics.push_back(std::move(sm));
            fr.test_estimates.push_back(std::move(est));
        }
        result.folds[static_cast<std::size_t>(fold)] = std::move(fr);
    };

    const int workers = std::min(resolve_threads(tcfg.threads), tcfg.folds);
    if (workers <= 1) {
        for (int f = 0; f < tcfg.folds; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(tcfg.folds));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w]() {
                for (int f = w; f < tcfg.folds; f += workers) {
                    try {
                        run_fold(f);
                    } catch (...) {
                        errors[static_cast<std::size_t>(f)] = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return result;
}

}  // namespace dlif
