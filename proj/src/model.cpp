#include "dlif/model.hpp"

#include <cmath>
#include <stdexcept>

namespace dlif {

void ModelConfig::validate() const {
    grid.validate();
    if (head == BasisFamily::direct && (use_peak || use_sparse))
        throw std::invalid_argument("ModelConfig: direct estimation takes no peak/sparse options");
    if (K < 1 || K > grid.frames())
        throw std::invalid_argument("ModelConfig: need 1 <= K <= T (K=" + std::to_string(K) +
                                    ", T=" + std::to_string(grid.frames()) + ")");
    if (D % heads)
        throw std::invalid_argument("ModelConfig: D=" + std::to_string(D) +
                                    " not divisible by heads=" + std::to_string(heads));
    if (P <= 0 || in_dims % P)
        throw std::invalid_argument("ModelConfig: input edge " + std::to_string(in_dims) +
                                    " not divisible by patch edge " + std::to_string(P));
    if (J < 1) throw std::invalid_argument("ModelConfig: need at least one encoder block");
}

std::string ModelConfig::name() const {
    std::string n = family_name(head);
    if (use_peak) n += "+peak";
    if (use_sparse) n += "+sparse";
    return n;
}

ModelConfig ModelConfig::named(const std::string& name) {
    ModelConfig cfg;
    std::string base = name;
    cfg.use_peak = false;
    cfg.use_sparse = false;
    auto strip = [&base](const std::string& suffix) {
        const auto pos = base.find(suffix);
        if (pos == std::string::npos) return false;
        base.erase(pos, suffix.size());
        return true;
    };
    cfg.use_peak = strip("+peak");
    cfg.use_sparse = strip("+sparse");
    cfg.head = family_from_name(base);
    cfg.validate();
    return cfg;
}

namespace {

int head_arity(BasisFamily f) { return f == BasisFamily::gaussian ? 3 : 4; }

/// stack column vectors [K,1] into a [K,n] matrix
DiffTensor stack_columns(std::vector<DiffTensor> cols) {
    std::vector<DiffTensor> rows;
    rows.reserve(cols.size());
    for (auto& c : cols) rows.push_back(transpose(c));
    return transpose(concat0(rows));
}

}  // namespace

DlifModel::DlifModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(init_seed);
    const int T = cfg_.grid.frames();
    const int patch_len = T * cfg_.P * cfg_.P * cfg_.P;
    const int N = cfg_.tokens();

    embed_ = Linear(store_, "embed", patch_len, cfg_.D, rng, /*with_bias=*/false);
    token_ = &store_.create_trunc_normal("token", {1, cfg_.D}, rng);
    pos_ = &store_.create_trunc_normal("pos", {N + 1, cfg_.D}, rng);
    blocks_.reserve(static_cast<std::size_t>(cfg_.J));
    for (int j = 0; j < cfg_.J; ++j)
        blocks_.emplace_back(store_, "block" + std::to_string(j), cfg_.D, cfg_.heads, rng);
    head_ln_ = LayerNorm(store_, "head_ln", cfg_.D);

    if (cfg_.head == BasisFamily::direct) {
        head_ = Linear(store_, "head.direct", cfg_.D, T, rng);
    } else {
        head_ = Linear(store_, "head.basis", cfg_.D, cfg_.K * head_arity(cfg_.head), rng);
        const double spacing = cfg_.grid.total_minutes() / cfg_.K;
        for (int k = 0; k < cfg_.K; ++k)
            location_offsets_.push_back((k + 0.5) * spacing);
    }
    if (cfg_.use_peak) peak_head_ = Linear(store_, "head.peak", cfg_.D, 1, rng);
}

DiffTensor DlifModel::head_input(GraphContext& ctx, const DynamicVolume& down,
                                 AttentionMaps* maps) const {
    if (!(down.grid == cfg_.grid))
        throw std::invalid_argument("forward: volume grid does not match the model grid");
    if (down.H != cfg_.in_dims || down.W != cfg_.in_dims || down.L != cfg_.in_dims)
        throw std::invalid_argument("forward: volume is " + std::to_string(down.H) + "^3, model expects " +
                                    std::to_string(cfg_.in_dims) + "^3");
    auto tokens = patch_embed(ctx, down, cfg_.P, embed_);
    auto z0 = prepend_estimation_token(ctx, tokens, *token_, *pos_);
    auto zj = encoder_forward(ctx, z0, blocks_, maps);
    return head_ln_.forward(ctx, slice(zj, 0, 0, 1));  // estimation token, [1,D]
}

DlifModel::Output DlifModel::forward(GraphContext& ctx, const DynamicVolume& down,
                                     AttentionMaps* maps) const {
    Output out;
    auto feat = head_input(ctx, down, maps);
    const int T = cfg_.grid.frames();

    DiffTensor alpha;
    if (cfg_.use_peak) {
        auto raw = reshape(peak_head_.forward(ctx, feat), {1});
        alpha = add_scalar(relu(add_scalar(raw, kAlphaRawInit)), kScaleEpsilon);
        out.aif.alpha = alpha.value()[0];
    }

    if (cfg_.head == BasisFamily::direct) {
        auto values = relu(reshape(head_.forward(ctx, feat), {T}));
        out.curve = values;
        out.aif.family = BasisFamily::direct;
        out.aif.direct.assign(values.value().begin(), values.value().end());
        if (cfg_.use_peak) out.curve = mul(out.curve, alpha);
        return out;
    }

    const int arity = head_arity(cfg_.head);
    auto raw = reshape(head_.forward(ctx, feat), {cfg_.K, arity});
    auto& tape = ctx.tape();
    auto locations = tape.leaf({cfg_.K, 1}, location_offsets_, false);

    auto w = add_scalar(slice(raw, 1, 0, 1), kWeightRawInit);
    out.weights = w;
    out.has_weights = true;

    DiffTensor params;
    if (cfg_.head == BasisFamily::gaussian) {
        auto mu = add(slice(raw, 1, 1, 1), locations);
        auto sigma = add_scalar(relu(add_scalar(slice(raw, 1, 2, 1), kSigmaRawInit)),
                                kScaleEpsilon);
        params = stack_columns({w, mu, sigma});
        out.curve = gaussian_curve(params, cfg_.grid);
        out.aif.family = BasisFamily::gaussian;
        const auto pv = params.value();
        for (int k = 0; k < cfg_.K; ++k) {
            out.aif.gauss.w.push_back(pv[3 * k + 0]);
            out.aif.gauss.mu.push_back(pv[3 * k + 1]);
            out.aif.gauss.sigma.push_back(pv[3 * k + 2]);
        }
    } else {
        auto lambda = add_scalar(relu(add_scalar(slice(raw, 1, 1, 1), kLambdaRawInit)),
                                 kScaleEpsilon);
        auto gamma = add(slice(raw, 1, 2, 1), locations);
        auto eta = add_scalar(slice(raw, 1, 3, 1), kEtaRawInit);
        params = stack_columns({w, lambda, gamma, eta});
        out.curve = expsig_curve(params, cfg_.grid);
        out.aif.family = BasisFamily::expsig;
        const auto pv = params.value();
        for (int k = 0; k < cfg_.K; ++k) {
            out.aif.expsig.w.push_back(pv[4 * k + 0]);
            out.aif.expsig.lambda.push_back(pv[4 * k + 1]);
            out.aif.expsig.gamma.push_back(pv[4 * k + 2]);
            out.aif.expsig.eta.push_back(pv[4 * k + 3]);
        }
    }
    if (cfg_.use_peak) out.curve = mul(out.curve, alpha);
    return out;
}

DiffTensor DlifModel::loss(GraphContext& ctx, const Output& out, const SampledCurve& target,
                           LossParts* parts) const {
    if (!(target.grid == cfg_.grid))
        throw std::invalid_argument("loss: target grid does not match the model grid");
    auto tgt = ctx.tape().leaf({cfg_.grid.frames()}, target.values, false);
    auto l1 = l1_similarity(out.curve, tgt);
    if (parts) parts->l1 = l1.item();
    if (cfg_.use_sparse) {
        if (!out.has_weights)
            throw std::logic_error("loss: sparsity requested but the head has no weights");
        auto penalty = sparsity_penalty(out.weights);
        if (parts) parts->sparsity = penalty.item();
        return add(l1, mul_scalar(penalty, cfg_.lambda_sparse));
    }
    return l1;
}

ScaledAIF DlifModel::estimate(const DynamicVolume& down, AttentionMaps* maps) const {
    GraphContext ctx(/*train=*/false);
    return forward(ctx, down, maps).aif;
}

}  // namespace dlif
