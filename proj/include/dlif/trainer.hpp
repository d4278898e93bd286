#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dlif/analysis.hpp"
#include "dlif/model.hpp"

namespace dlif {

struct TrainConfig {
    int epochs = 150;       // desk-scale default; 500 reproduces the full protocol
    double lr = 1e-4;
    int batch = 1;          // one optimizer step per subject
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int folds = 5;          // 8:2 train/test split per fold
    bool augment_flips = true;
    int threads = 0;        // 0 = DLIF_THREADS env or hardware concurrency
};

/// resolved worker count: explicit > DLIF_THREADS > hardware concurrency
int resolve_threads(int requested);

/// Bias-corrected Adam over a ParamStore; slots follow parameter order.
class Adam {
public:
    Adam(const ParamStore& store, const TrainConfig& cfg);

    /// grads indexed in store order; throws naming the parameter on any
    /// non-finite gradient
    void step(ParamStore& store, const std::vector<std::vector<double>>& grads);
    std::int64_t steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// flip spatial axes of a volume in place (temporal axis untouched)
void flip_volume(DynamicVolume& vol, bool flip_z, bool flip_y, bool flip_x);

/// each spatial axis flips independently with p = 0.5; target AIF unchanged
DynamicVolume augment_flip(const DynamicVolume& vol, Rng& rng);

/// one training example: downsampled input plus its ground-truth curve
struct TrainSample {
    std::string id;
    Cohort cohort = Cohort::HAB;
    DynamicVolume down;
    SampledCurve target;
};

struct TrainLogRow {
    int epoch = 0;
    int step = 0;
    double loss = 0.0;
    double l1 = 0.0;
    double sparsity = 0.0;
};

/// Serializable snapshot of a trained model (values stored as 32-bit floats).
struct Checkpoint {
    ModelConfig model_cfg;
    int epoch = 0;
    double running_loss = 0.0;
    std::uint64_t seed_state = 0;

    struct Entry {
        std::string name;
        Shape shape;
        std::int64_t offset = 0;  // in floats
    };
    std::vector<Entry> manifest;
    std::vector<float> blob;

    static Checkpoint capture(const DlifModel& model, int epoch, double running_loss,
                              std::uint64_t seed_state);
    /// validates the manifest against the model's parameters before copying
    void restore_into(DlifModel& model) const;
};

/// Optimize one model on the given samples; deterministic for a fixed seed
/// when augment_flips is off.
std::vector<TrainLogRow> train_model(DlifModel& model, std::span<const TrainSample> data,
                                     const TrainConfig& cfg);

struct SubjectMetrics {
    std::string id;
    Cohort cohort = Cohort::HAB;
    int fold = 0;
    MetricsReport metrics;
    int active_weights = -1;  // |w_k| > 1% of max|w|; -1 for the direct head
};

struct FoldResult {
    int fold = 0;
    Checkpoint checkpoint;
    std::vector<TrainLogRow> log;
    std::vector<SubjectMetrics> test_metrics;
    std::vector<ScaledAIF> test_estimates;  // parallel to test_metrics
};

struct CvResult {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    std::vector<FoldResult> folds;
};

/// count of weights above rel_threshold * max|w|
int active_weight_count(std::span<const double> w, double rel_threshold = 0.01);
int active_weight_count(const ScaledAIF& aif, double rel_threshold = 0.01);

/// Five-fold (configurable) cross-validation: deterministic fold assignment
/// (subject position mod folds after a seeded shuffle), one model per fold,
/// held-out evaluation through the metric suite. Folds may run in parallel;
/// results are deterministic regardless of thread count.
CvResult cross_validate(std::span<const TrainSample> cohort, const ModelConfig& mcfg,
                        const TrainConfig& tcfg);

}  // namespace dlif
