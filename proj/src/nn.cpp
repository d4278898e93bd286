#include "dlif/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dlif {

Param& ParamStore::create(std::string name, Shape shape, double fill) {
    if (find(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->name = std::move(name);
    p->shape = std::move(shape);
    p->value.assign(static_cast<std::size_t>(numel(p->shape)), fill);
    params_.push_back(std::move(p));
    return *params_.back();
}

Param& ParamStore::create_trunc_normal(std::string name, Shape shape, Rng& rng, double sigma) {
    Param& p = create(std::move(name), std::move(shape));
    for (auto& v : p.value) v = rng.truncated_normal(sigma);
    return p;
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

std::int64_t ParamStore::total_size() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

DiffTensor GraphContext::use(const Param& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return it->second;
    DiffTensor leaf = tape_.leaf(p.shape, p.value, train_);
    leaves_.emplace(&p, leaf);
    return leaf;
}

std::vector<double> GraphContext::grad_of(const Param& p) const {
    auto it = leaves_.find(&p);
    if (it == leaves_.end()) return std::vector<double>(p.value.size(), 0.0);
    auto g = it->second.grad();
    return std::vector<double>(g.begin(), g.end());
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
               bool with_bias)
    : in_(in), out_(out) {
    weight_ = &store.create_trunc_normal(name + ".weight", {in, out}, rng);
    if (with_bias) bias_ = &store.create(name + ".bias", {out});
}

DiffTensor Linear::forward(GraphContext& ctx, DiffTensor x) const {
    auto y = matmul(x, ctx.use(*weight_));
    if (bias_) y = add(y, ctx.use(*bias_));
    return y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
    gamma_ = &store.create(name + ".gamma", {dim}, 1.0);
    beta_ = &store.create(name + ".beta", {dim});
}

DiffTensor LayerNorm::forward(GraphContext& ctx, DiffTensor x) const {
    auto m = mean_axis(x, -1, true);
    auto centered = sub(x, m);
    auto var = mean_axis(mul(centered, centered), -1, true);
    auto norm = div(centered, sqrt(add_scalar(var, kEps)));
    return add(mul(norm, ctx.use(*gamma_)), ctx.use(*beta_));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int dim,
                                       int heads, Rng& rng)
    : dim_(dim), heads_(heads) {
    if (dim % heads)
        throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    qkv_ = Linear(store, name + ".qkv", dim, 3 * dim, rng);
    proj_ = Linear(store, name + ".proj", dim, dim, rng);
}

DiffTensor MultiHeadAttention::forward(GraphContext& ctx, DiffTensor z,
                                       std::vector<std::vector<double>>* head_maps) const {
    const int dh = dim_ / heads_;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    auto qkv = qkv_.forward(ctx, z);  // [S, 3D]

    std::vector<DiffTensor> heads_t;  // transposed head outputs [dh, S]
    heads_t.reserve(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
        auto q = slice(qkv, 1, static_cast<std::int64_t>(h) * dh, dh);
        auto k = slice(qkv, 1, static_cast<std::int64_t>(dim_) + h * dh, dh);
        auto v = slice(qkv, 1, static_cast<std::int64_t>(2) * dim_ + h * dh, dh);
        auto logits = mul_scalar(matmul(q, transpose(k)), inv_sqrt_dh);
        auto attn = softmax(logits);  // [S, S]
        if (head_maps)
            head_maps->emplace_back(attn.value().begin(), attn.value().end());
        heads_t.push_back(transpose(matmul(attn, v)));
    }
    auto merged = transpose(concat0(heads_t));  // [S, D]
    return proj_.forward(ctx, merged);
}

EncoderBlock::EncoderBlock(ParamStore& store, const std::string& name, int dim, int heads,
                           Rng& rng) {
    ln1_ = LayerNorm(store, name + ".ln1", dim);
    msa_ = MultiHeadAttention(store, name + ".msa", dim, heads, rng);
    ln2_ = LayerNorm(store, name + ".ln2", dim);
    fc1_ = Linear(store, name + ".mlp.fc1", dim, 4 * dim, rng);
    fc2_ = Linear(store, name + ".mlp.fc2", 4 * dim, dim, rng);
}

DiffTensor EncoderBlock::forward(GraphContext& ctx, DiffTensor z,
                                 std::vector<std::vector<double>>* head_maps) const {
    auto attended = add(msa_.forward(ctx, ln1_.forward(ctx, z), head_maps), z);
    auto mlp = fc2_.forward(ctx, gelu(fc1_.forward(ctx, ln2_.forward(ctx, attended))));
    return add(mlp, attended);
}

std::vector<double> patchify(const DynamicVolume& vol, int P, std::int64_t& n_patches,
                             std::int64_t& patch_len) {
    if (P <= 0 || vol.H % P || vol.W % P || vol.L % P)
        throw std::invalid_argument(
            "patchify: dims " + std::to_string(vol.H) + "x" + std::to_string(vol.W) + "x" +
            std::to_string(vol.L) + " require padding to a multiple of P=" + std::to_string(P));
    const int T = vol.grid.frames();
    const int nz = vol.H / P, ny = vol.W / P, nx = vol.L / P;
    n_patches = static_cast<std::int64_t>(nz) * ny * nx;
    patch_len = static_cast<std::int64_t>(T) * P * P * P;

    std::vector<double> out(static_cast<std::size_t>(n_patches * patch_len));
    std::size_t row = 0;
    for (int pz = 0; pz < nz; ++pz)
        for (int py = 0; py < ny; ++py)
            for (int px = 0; px < nx; ++px, ++row) {
                double* dst = out.data() + row * static_cast<std::size_t>(patch_len);
                std::size_t i = 0;
                for (int t = 0; t < T; ++t)
                    for (int dz = 0; dz < P; ++dz)
                        for (int dy = 0; dy < P; ++dy)
                            for (int dx = 0; dx < P; ++dx, ++i)
                                dst[i] = vol.at(t, pz * P + dz, py * P + dy, px * P + dx);
            }
    return out;
}

DiffTensor patch_embed(GraphContext& ctx, const DynamicVolume& vol, int P, const Linear& embed) {
    std::int64_t n = 0, len = 0;
    auto patches = patchify(vol, P, n, len);
    if (len != embed.in_features())
        throw std::invalid_argument("patch_embed: patch length " + std::to_string(len) +
                                    " does not match embedding input " +
                                    std::to_string(embed.in_features()));
    auto x = ctx.tape().leaf({n, len}, std::move(patches), false);
    return embed.forward(ctx, x);
}

DiffTensor prepend_estimation_token(GraphContext& ctx, DiffTensor tokens, const Param& token,
                                    const Param& pos) {
    std::vector<DiffTensor> rows = {ctx.use(token), tokens};
    auto z = concat0(rows);
    return add(z, ctx.use(pos));
}

DiffTensor encoder_forward(GraphContext& ctx, DiffTensor z0,
                           const std::vector<EncoderBlock>& blocks, AttentionMaps* maps) {
    if (blocks.empty()) throw std::invalid_argument("encoder_forward: need at least one block");
    DiffTensor z = z0;
    if (maps) {
        maps->seq = static_cast<int>(z0.shape()[0]);
        maps->blocks.clear();
    }
    for (const auto& block : blocks) {
        std::vector<std::vector<double>>* head_maps = nullptr;
        if (maps) {
            maps->blocks.emplace_back();
            head_maps = &maps->blocks.back();
        }
        z = block.forward(ctx, z, head_maps);
    }
    return z;
}

}  // namespace dlif
