#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlif/basis.hpp"
#include "dlif/core.hpp"
#include "dlif/nn.hpp"

namespace dlif {

/// One of the nine estimation configurations: a head family plus the optional
/// amplitude (peak) head and sparsity constraint.
struct ModelConfig {
    BasisFamily head = BasisFamily::gaussian;
    bool use_peak = false;
    bool use_sparse = false;
    int K = 16;            // basis functions
    int P = 2;             // patch edge
    int D = 64;            // token embedding
    int J = 4;             // encoder blocks
    int heads = 4;
    double lambda_sparse = 0.01;
    int in_dims = 8;       // downsampled cubic input edge
    TimeGrid grid = TimeGrid::default_30x90();

    void validate() const;
    int tokens() const {
        const int per_axis = in_dims / P;
        return per_axis * per_axis * per_axis;
    }
    /// e.g. "gaussian+peak+sparse", "direct"
    std::string name() const;
    static ModelConfig named(const std::string& name);  // parses the same format
};

/// The assembled estimator: downsampled volume -> patch tokens -> encoder ->
/// estimation head(s) -> ScaledAIF.
class DlifModel {
public:
    DlifModel(ModelConfig cfg, std::uint64_t init_seed);

    struct Output {
        ScaledAIF aif;       // post-activation parameters, ready to serialize
        DiffTensor curve;    // [T] frame-midpoint samples with alpha applied
        DiffTensor weights;  // [K,1] basis weights (basis heads only)
        bool has_weights = false;
    };

    Output forward(GraphContext& ctx, const DynamicVolume& down,
                   AttentionMaps* maps = nullptr) const;

    struct LossParts {
        double l1 = 0.0;
        double sparsity = 0.0;  // before lambda weighting
    };

    /// L1 similarity plus the optional weight-sparsity term.
    DiffTensor loss(GraphContext& ctx, const Output& out, const SampledCurve& target,
                    LossParts* parts = nullptr) const;

    /// inference-only convenience
    ScaledAIF estimate(const DynamicVolume& down, AttentionMaps* maps = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // initialization offsets added to raw head outputs (fixed, not trained):
    // locations spread uniformly over the scan, scales start wide enough to
    // overlap the grid, amplitude near 1
    static constexpr double kSigmaRawInit = 4.0;
    static constexpr double kLambdaRawInit = 0.1;
    static constexpr double kEtaRawInit = 2.0;
    static constexpr double kAlphaRawInit = 1.0;
    static constexpr double kWeightRawInit = 2.0;

private:
    DiffTensor head_input(GraphContext& ctx, const DynamicVolume& down,
                          AttentionMaps* maps) const;

    ModelConfig cfg_;
    ParamStore store_;
    Linear embed_;
    Param* token_ = nullptr;
    Param* pos_ = nullptr;
    std::vector<EncoderBlock> blocks_;
    LayerNorm head_ln_;
    Linear head_;
    Linear peak_head_;
    std::vector<double> location_offsets_;
};

}  // namespace dlif
