#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlif/core.hpp"
#include "dlif/rng.hpp"
#include "dlif/tensor.hpp"

namespace dlif {

/// A named, persistently stored parameter. Training reads gradients off a
/// per-step tape and writes updates back here.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;

    std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
};

/// Owns all parameters of a model in creation order (the checkpoint order).
class ParamStore {
public:
    Param& create(std::string name, Shape shape, double fill = 0.0);
    Param& create_trunc_normal(std::string name, Shape shape, Rng& rng, double sigma = 0.02);
    Param* find(const std::string& name);
    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
    std::int64_t total_size() const;

private:
    std::vector<std::unique_ptr<Param>> params_;
};

/// One forward/backward pass: a fresh tape (define-by-run) plus the leaves
/// minted for each parameter used in this pass.
class GraphContext {
public:
    explicit GraphContext(bool train = true) : train_(train) {}

    Tape& tape() { return tape_; }
    bool training() const { return train_; }

    DiffTensor use(const Param& p);
    /// gradient accumulated on the leaf of p in this pass (zeros if unused)
    std::vector<double> grad_of(const Param& p) const;

private:
    Tape tape_;
    bool train_;
    std::unordered_map<const Param*, DiffTensor> leaves_;
};

/// y = x W (+ b). Bias is optional; the patch projection of the token
/// embedding uses the bias-free form.
class Linear {
public:
    Linear() = default;
    Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
           bool with_bias = true);

    DiffTensor forward(GraphContext& ctx, DiffTensor x) const;
    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    Param* weight_ = nullptr;  // [in, out]
    Param* bias_ = nullptr;    // [out]
    int in_ = 0, out_ = 0;
};

/// Per-token normalization over the last axis with learned affine.
class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, int dim);

    DiffTensor forward(GraphContext& ctx, DiffTensor x) const;
    static constexpr double kEps = 1e-5;

private:
    Param* gamma_ = nullptr;
    Param* beta_ = nullptr;
};

/// Per-block, per-head attention matrices captured during a forward pass
/// (row-major S x S, rows = queries).
struct AttentionMaps {
    int seq = 0;
    std::vector<std::vector<std::vector<double>>> blocks;  // [block][head]
};

/// Softmax self-attention, A = softmax(Q K^T / sqrt(D_h)), multi-head with a
/// joint qkv projection and an output projection.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);

    DiffTensor forward(GraphContext& ctx, DiffTensor z,
                       std::vector<std::vector<double>>* head_maps) const;
    int heads() const { return heads_; }

private:
    Linear qkv_;
    Linear proj_;
    int dim_ = 0, heads_ = 0;
};

/// Pre-norm residual block: z' = MSA(LN(z)) + z; out = MLP(LN(z')) + z',
/// MLP = Linear(D,4D) -> GELU -> Linear(4D,D).
class EncoderBlock {
public:
    EncoderBlock() = default;
    EncoderBlock(ParamStore& store, const std::string& name, int dim, int heads, Rng& rng);

    DiffTensor forward(GraphContext& ctx, DiffTensor z,
                       std::vector<std::vector<double>>* head_maps) const;

private:
    LayerNorm ln1_, ln2_;
    MultiHeadAttention msa_;
    Linear fc1_, fc2_;
};

/// Vectorize non-overlapping P^3 patches of a downsampled volume, each in
/// fixed (t,z,y,x) order; rows are patches in z-major patch order.
/// Throws when a spatial dim is not divisible by P.
std::vector<double> patchify(const DynamicVolume& vol, int P, std::int64_t& n_patches,
                             std::int64_t& patch_len);

/// tokens = patches * E  (E bias-free)
DiffTensor patch_embed(GraphContext& ctx, const DynamicVolume& vol, int P, const Linear& embed);

/// Prepend the learnable estimation token and add the positional embedding.
DiffTensor prepend_estimation_token(GraphContext& ctx, DiffTensor tokens, const Param& token,
                                    const Param& pos);

/// Run all encoder blocks, optionally recording attention maps.
DiffTensor encoder_forward(GraphContext& ctx, DiffTensor z0,
                           const std::vector<EncoderBlock>& blocks, AttentionMaps* maps);

}  // namespace dlif
