#include "dlif/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlif {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_finite_or_domain(const char* op, double x, bool ok) {
    if (!ok) fail(std::string(op) + ": input " + std::to_string(x) + " outside domain");
}

// ---------------------------------------------------------------------------
// broadcasting
// ---------------------------------------------------------------------------

struct BcastPlan {
    Shape out;
    // per output dim: element stride into a/b, 0 where that operand broadcasts
    std::vector<std::int64_t> stride_a, stride_b;
};

BcastPlan make_bcast(const Shape& a, const Shape& b, const char* op) {
    const int nd = static_cast<int>(std::max(a.size(), b.size()));
    BcastPlan p;
    p.out.resize(nd);
    p.stride_a.assign(nd, 0);
    p.stride_b.assign(nd, 0);

    std::vector<std::int64_t> full_a(nd, 1), full_b(nd, 1);
    std::copy(a.begin(), a.end(), full_a.begin() + (nd - static_cast<int>(a.size())));
    std::copy(b.begin(), b.end(), full_b.begin() + (nd - static_cast<int>(b.size())));

    for (int d = 0; d < nd; ++d) {
        if (full_a[d] == full_b[d]) {
            p.out[d] = full_a[d];
        } else if (full_a[d] == 1) {
            p.out[d] = full_b[d];
        } else if (full_b[d] == 1) {
            p.out[d] = full_a[d];
        } else {
            fail(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
        }
    }
    std::int64_t sa = 1, sb = 1;
    for (int d = nd - 1; d >= 0; --d) {
        p.stride_a[d] = (full_a[d] == 1) ? 0 : sa;
        p.stride_b[d] = (full_b[d] == 1) ? 0 : sb;
        sa *= full_a[d];
        sb *= full_b[d];
    }
    return p;
}

// Walks the output index space once, handing (ia, ib, iout) to fn.
template <typename Fn>
void bcast_walk(const BcastPlan& p, Fn&& fn) {
    const int nd = static_cast<int>(p.out.size());
    const std::int64_t total = numel(p.out);
    if (total == 0) return;
    std::vector<std::int64_t> counter(nd, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < total; ++i) {
        fn(ia, ib, i);
        for (int d = nd - 1; d >= 0; --d) {
            ++counter[d];
            ia += p.stride_a[d];
            ib += p.stride_b[d];
            if (counter[d] < p.out[d]) break;
            ia -= p.stride_a[d] * p.out[d];
            ib -= p.stride_b[d] * p.out[d];
            counter[d] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// matmul kernels (row-major, accumulate into C)
// ---------------------------------------------------------------------------

void mm_nn_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(m,n) += A(m,k) * B(n,k)^T
void mm_nt_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C(m,n) += A(k,m)^T * B(k,n)
void mm_tn_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape / DiffTensor plumbing
// ---------------------------------------------------------------------------

struct Tape::BackwardCtx {
    // per-node downstream gradient for this backward() call; lazily allocated
    std::vector<std::vector<double>> g;

    std::vector<double>& buf(const Tape& tape, int id) {
        auto& v = g[static_cast<std::size_t>(id)];
        if (v.empty()) v.assign(tape.node(id).value.size(), 0.0);
        return v;
    }
    bool has(int id) const { return !g[static_cast<std::size_t>(id)].empty(); }
};

const Shape& DiffTensor::shape() const { return tape_->node(id_).shape; }
std::int64_t DiffTensor::size() const { return static_cast<std::int64_t>(tape_->node(id_).value.size()); }
bool DiffTensor::requires_grad() const { return tape_->node(id_).requires_grad; }
std::span<const double> DiffTensor::value() const { return tape_->node(id_).value; }
std::span<const double> DiffTensor::grad() const { return tape_->node(id_).grad; }

double DiffTensor::item() const {
    const auto& v = tape_->node(id_).value;
    if (v.size() != 1) fail("item: tensor " + shape_str(shape()) + " is not scalar");
    return v[0];
}

DiffTensor Tape::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
        fail("leaf: data length " + std::to_string(data.size()) + " does not match shape " +
             shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad.assign(n.value.size(), 0.0);
    nodes_.push_back(std::move(n));
    return DiffTensor(this, static_cast<int>(nodes_.size()) - 1);
}

DiffTensor Tape::constant(Shape shape, double fill) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), fill);
    return leaf(std::move(shape), std::move(v), false);
}

DiffTensor Tape::record(Shape shape, std::vector<double> value, std::vector<int> parents,
                        BackFn backward) {
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (int p : n.parents)
        if (node(p).requires_grad) n.requires_grad = true;
    if (n.requires_grad) {
        n.grad.assign(n.value.size(), 0.0);
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return DiffTensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(DiffTensor root) {
    if (root.tape() != this) fail("backward: root from another tape");
    const Node& r = node(root.id());
    if (r.value.size() != 1) fail("backward: root " + shape_str(r.shape) + " is not scalar");
    if (!r.requires_grad) return;

    BackwardCtx ctx;
    ctx.g.resize(static_cast<std::size_t>(root.id()) + 1);
    ctx.buf(*this, root.id())[0] = 1.0;

    for (int id = root.id(); id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || !ctx.has(id)) continue;
        if (n.backward) n.backward(*this, id, ctx);
    }
    // commit: one backward call contributes exactly d(root)/d(node) on top of
    // whatever grads were already accumulated
    for (int id = root.id(); id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || !ctx.has(id)) continue;
        const auto& g = ctx.g[static_cast<std::size_t>(id)];
        for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_)
        std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// elementwise binary ops
// ---------------------------------------------------------------------------

namespace {

void require_same_tape(DiffTensor a, DiffTensor b, const char* op) {
    if (a.tape() == nullptr || a.tape() != b.tape())
        fail(std::string(op) + ": operands live on different tapes");
}

enum class BinOp { Add, Sub, Mul, Div };

const char* binop_name(BinOp op) {
    switch (op) {
        case BinOp::Add: return "add";
        case BinOp::Sub: return "sub";
        case BinOp::Mul: return "mul";
        default: return "div";
    }
}

}  // namespace

static DiffTensor binary_op(DiffTensor a, DiffTensor b, BinOp op) {
    const char* name = binop_name(op);
    require_same_tape(a, b, name);
    Tape& tape = *a.tape();
    const auto plan = make_bcast(a.shape(), b.shape(), name);

    std::vector<double> out(static_cast<std::size_t>(numel(plan.out)));
    const auto av = a.value();
    const auto bv = b.value();
    bcast_walk(plan, [&](std::int64_t ia, std::int64_t ib, std::int64_t io) {
        switch (op) {
            case BinOp::Add: out[io] = av[ia] + bv[ib]; break;
            case BinOp::Sub: out[io] = av[ia] - bv[ib]; break;
            case BinOp::Mul: out[io] = av[ia] * bv[ib]; break;
            case BinOp::Div: out[io] = av[ia] / bv[ib]; break;
        }
    });

    const int pa = a.id(), pb = b.id();
    return tape.record(
        plan.out, std::move(out), {pa, pb},
        [plan, pa, pb, op](Tape& t, int self, Tape::BackwardCtx& ctx) {
            const auto& g = ctx.g[static_cast<std::size_t>(self)];
            const bool need_a = t.node(pa).requires_grad;
            const bool need_b = t.node(pb).requires_grad;
            const auto& av = t.node(pa).value;
            const auto& bv = t.node(pb).value;
            auto* ga = need_a ? &ctx.buf(t, pa) : nullptr;
            auto* gb = need_b ? &ctx.buf(t, pb) : nullptr;
            bcast_walk(plan, [&](std::int64_t ia, std::int64_t ib, std::int64_t io) {
                const double go = g[static_cast<std::size_t>(io)];
                switch (op) {
                    case BinOp::Add:
                        if (ga) (*ga)[ia] += go;
                        if (gb) (*gb)[ib] += go;
                        break;
                    case BinOp::Sub:
                        if (ga) (*ga)[ia] += go;
                        if (gb) (*gb)[ib] -= go;
                        break;
                    case BinOp::Mul:
                        if (ga) (*ga)[ia] += go * bv[ib];
                        if (gb) (*gb)[ib] += go * av[ia];
                        break;
                    case BinOp::Div:
                        if (ga) (*ga)[ia] += go / bv[ib];
                        if (gb) (*gb)[ib] -= go * av[ia] / (bv[ib] * bv[ib]);
                        break;
                }
            });
        });
}

DiffTensor add(DiffTensor a, DiffTensor b) { return binary_op(a, b, BinOp::Add); }
DiffTensor sub(DiffTensor a, DiffTensor b) { return binary_op(a, b, BinOp::Sub); }
DiffTensor mul(DiffTensor a, DiffTensor b) { return binary_op(a, b, BinOp::Mul); }
DiffTensor div(DiffTensor a, DiffTensor b) { return binary_op(a, b, BinOp::Div); }

// ---------------------------------------------------------------------------
// linear algebra / structure ops
// ---------------------------------------------------------------------------

DiffTensor matmul(DiffTensor a, DiffTensor b) {
    require_same_tape(a, b, "matmul");
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        fail("matmul: shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const std::int64_t m = sa[0], k = sa[1], n = sb[1];

    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    mm_nn_acc(a.value().data(), b.value().data(), out.data(), m, k, n);

    const int pa = a.id(), pb = b.id();
    return a.tape()->record(
        {m, n}, std::move(out), {pa, pb},
        [pa, pb, m, k, n](Tape& t, int self, Tape::BackwardCtx& ctx) {
            const auto& g = ctx.g[static_cast<std::size_t>(self)];
            if (t.node(pa).requires_grad)  // dA = G * B^T
                mm_nt_acc(g.data(), t.node(pb).value.data(), ctx.buf(t, pa).data(), m, n, k);
            if (t.node(pb).requires_grad)  // dB = A^T * G
                mm_tn_acc(t.node(pa).value.data(), g.data(), ctx.buf(t, pb).data(), k, m, n);
        });
}

DiffTensor transpose(DiffTensor a) {
    const Shape& s = a.shape();
    if (s.size() != 2) fail("transpose: expected 2-D, got " + shape_str(s));
    const std::int64_t m = s[0], n = s[1];
    std::vector<double> out(static_cast<std::size_t>(m * n));
    const auto av = a.value();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    const int pa = a.id();
    return a.tape()->record({n, m}, std::move(out), {pa},
                            [pa, m, n](Tape& t, int self, Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                auto& ga = ctx.buf(t, pa);
                                for (std::int64_t j = 0; j < n; ++j)
                                    for (std::int64_t i = 0; i < m; ++i)
                                        ga[i * n + j] += g[j * m + i];
                            });
}

DiffTensor reshape(DiffTensor a, Shape s) {
    if (numel(s) != a.size())
        fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(s));
    std::vector<double> out(a.value().begin(), a.value().end());
    const int pa = a.id();
    return a.tape()->record(std::move(s), std::move(out), {pa},
                            [pa](Tape& t, int self, Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                auto& ga = ctx.buf(t, pa);
                                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                            });
}

DiffTensor concat0(std::span<const DiffTensor> parts) {
    if (parts.empty()) fail("concat: no inputs");
    Tape& tape = *parts[0].tape();
    Shape s = parts[0].shape();
    std::int64_t rows = 0;
    for (const auto& p : parts) {
        require_same_tape(parts[0], p, "concat");
        const Shape& ps = p.shape();
        if (ps.size() != s.size() ||
            !std::equal(ps.begin() + 1, ps.end(), s.begin() + 1))
            fail("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(ps));
        rows += ps[0];
    }
    s[0] = rows;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(numel(s)));
    std::vector<int> ids;
    std::vector<std::int64_t> sizes;
    for (const auto& p : parts) {
        out.insert(out.end(), p.value().begin(), p.value().end());
        ids.push_back(p.id());
        sizes.push_back(p.size());
    }
    return tape.record(std::move(s), std::move(out), ids,
                       [ids, sizes](Tape& t, int self, Tape::BackwardCtx& ctx) {
                           const auto& g = ctx.g[static_cast<std::size_t>(self)];
                           std::int64_t off = 0;
                           for (std::size_t p = 0; p < ids.size(); ++p) {
                               if (t.node(ids[p]).requires_grad) {
                                   auto& gp = ctx.buf(t, ids[p]);
                                   for (std::int64_t i = 0; i < sizes[p]; ++i)
                                       gp[i] += g[off + i];
                               }
                               off += sizes[p];
                           }
                       });
}

DiffTensor slice(DiffTensor a, int axis, std::int64_t start, std::int64_t len) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        fail("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    if (start < 0 || len <= 0 || start + len > s[axis])
        fail("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
             ") out of bounds for " + shape_str(s));

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
    const std::int64_t ax = s[axis];

    Shape os = s;
    os[axis] = len;
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    const auto av = a.value();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < len; ++i)
            std::copy_n(av.data() + (o * ax + start + i) * inner, inner,
                        out.data() + (o * len + i) * inner);

    const int pa = a.id();
    return a.tape()->record(std::move(os), std::move(out), {pa},
                            [pa, outer, inner, ax, start, len](Tape& t, int self,
                                                               Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                auto& ga = ctx.buf(t, pa);
                                for (std::int64_t o = 0; o < outer; ++o)
                                    for (std::int64_t i = 0; i < len; ++i) {
                                        const double* gs = g.data() + (o * len + i) * inner;
                                        double* gd = ga.data() + (o * ax + start + i) * inner;
                                        for (std::int64_t j = 0; j < inner; ++j) gd[j] += gs[j];
                                    }
                            });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

DiffTensor sum(DiffTensor a) {
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    const int pa = a.id();
    return a.tape()->record({1}, {acc}, {pa},
                            [pa](Tape& t, int self, Tape::BackwardCtx& ctx) {
                                const double g = ctx.g[static_cast<std::size_t>(self)][0];
                                auto& ga = ctx.buf(t, pa);
                                for (auto& v : ga) v += g;
                            });
}

DiffTensor mean(DiffTensor a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    return mul_scalar(sum(a), inv);
}

static DiffTensor reduce_axis(DiffTensor a, int axis, bool keepdims, bool take_mean) {
    const Shape& s = a.shape();
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        fail("sum_axis: axis out of range for " + shape_str(s));

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
    const std::int64_t ax = s[axis];
    const double scale = take_mean ? 1.0 / static_cast<double>(ax) : 1.0;

    Shape os;
    for (int d = 0; d < static_cast<int>(s.size()); ++d) {
        if (d == axis) {
            if (keepdims) os.push_back(1);
        } else {
            os.push_back(s[d]);
        }
    }
    if (os.empty()) os.push_back(1);

    std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
    const auto av = a.value();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < ax; ++k) {
            const double* src = av.data() + (o * ax + k) * inner;
            double* dst = out.data() + o * inner;
            for (std::int64_t j = 0; j < inner; ++j) dst[j] += src[j];
        }
    if (take_mean)
        for (auto& v : out) v *= scale;

    const int pa = a.id();
    return a.tape()->record(std::move(os), std::move(out), {pa},
                            [pa, outer, inner, ax, scale](Tape& t, int self,
                                                          Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                auto& ga = ctx.buf(t, pa);
                                for (std::int64_t o = 0; o < outer; ++o)
                                    for (std::int64_t k = 0; k < ax; ++k) {
                                        const double* gs = g.data() + o * inner;
                                        double* gd = ga.data() + (o * ax + k) * inner;
                                        for (std::int64_t j = 0; j < inner; ++j)
                                            gd[j] += gs[j] * scale;
                                    }
                            });
}

DiffTensor sum_axis(DiffTensor a, int axis, bool keepdims) {
    return reduce_axis(a, axis, keepdims, false);
}

DiffTensor mean_axis(DiffTensor a, int axis, bool keepdims) {
    return reduce_axis(a, axis, keepdims, true);
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities
// ---------------------------------------------------------------------------

namespace {

// forward value + local derivative, captured for the backward pass
template <typename FwdFn>
DiffTensor unary_op(DiffTensor a, const char* /*name*/, FwdFn&& fn) {
    const auto av = a.value();
    std::vector<double> out(av.size());
    std::vector<double> deriv(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) fn(av[i], out[i], deriv[i]);
    const int pa = a.id();
    return a.tape()->record(a.shape(), std::move(out), {pa},
                            [pa, deriv = std::move(deriv)](Tape& t, int self,
                                                           Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                auto& ga = ctx.buf(t, pa);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    ga[i] += g[i] * deriv[i];
                            });
}

}  // namespace

DiffTensor exp(DiffTensor a) {
    return unary_op(a, "exp", [](double x, double& y, double& d) {
        y = std::exp(x);
        d = y;
    });
}

DiffTensor log(DiffTensor a) {
    return unary_op(a, "log", [](double x, double& y, double& d) {
        check_finite_or_domain("log", x, x > 0.0);
        y = std::log(x);
        d = 1.0 / x;
    });
}

DiffTensor sqrt(DiffTensor a) {
    return unary_op(a, "sqrt", [](double x, double& y, double& d) {
        check_finite_or_domain("sqrt", x, x >= 0.0);
        y = std::sqrt(x);
        d = (x > 0.0) ? 0.5 / y : 0.0;
    });
}

DiffTensor relu(DiffTensor a) {
    return unary_op(a, "relu", [](double x, double& y, double& d) {
        y = x > 0.0 ? x : 0.0;
        d = x > 0.0 ? 1.0 : 0.0;
    });
}

DiffTensor sigmoid(DiffTensor a) {
    return unary_op(a, "sigmoid", [](double x, double& y, double& d) {
        if (x >= 0.0) {
            y = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            y = e / (1.0 + e);
        }
        d = y * (1.0 - y);
    });
}

DiffTensor gelu(DiffTensor a) {
    constexpr double kC = 0.7978845608028653558799;  // sqrt(2/pi)
    constexpr double kCubic = 0.044715;
    return unary_op(a, "gelu", [](double x, double& y, double& d) {
        const double u = kC * (x + kCubic * x * x * x);
        const double t = std::tanh(u);
        y = 0.5 * x * (1.0 + t);
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kCubic * x * x);
    });
}

DiffTensor abs(DiffTensor a) {
    return unary_op(a, "abs", [](double x, double& y, double& d) {
        y = std::fabs(x);
        d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    });
}

DiffTensor softmax(DiffTensor a) {
    const Shape& s = a.shape();
    const std::int64_t last = s.back();
    const std::int64_t rows = a.size() / last;
    const auto av = a.value();
    std::vector<double> out(av.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * last;
        double* y = out.data() + r * last;
        double mx = x[0];
        for (std::int64_t j = 1; j < last; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < last; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        const double inv = 1.0 / z;
        for (std::int64_t j = 0; j < last; ++j) y[j] *= inv;
    }
    const int pa = a.id();
    return a.tape()->record(s, std::move(out), {pa},
                            [pa, rows, last](Tape& t, int self, Tape::BackwardCtx& ctx) {
                                const auto& g = ctx.g[static_cast<std::size_t>(self)];
                                const auto& y = t.node(self).value;
                                auto& ga = ctx.buf(t, pa);
                                for (std::int64_t r = 0; r < rows; ++r) {
                                    const double* gr = g.data() + r * last;
                                    const double* yr = y.data() + r * last;
                                    double dot = 0.0;
                                    for (std::int64_t j = 0; j < last; ++j) dot += gr[j] * yr[j];
                                    double* gd = ga.data() + r * last;
                                    for (std::int64_t j = 0; j < last; ++j)
                                        gd[j] += yr[j] * (gr[j] - dot);
                                }
                            });
}

DiffTensor add_scalar(DiffTensor a, double c) {
    return unary_op(a, "add_scalar", [c](double x, double& y, double& d) {
        y = x + c;
        d = 1.0;
    });
}

DiffTensor mul_scalar(DiffTensor a, double c) {
    return unary_op(a, "mul_scalar", [c](double x, double& y, double& d) {
        y = x * c;
        d = c;
    });
}

// ---------------------------------------------------------------------------
// finite-difference validation
// ---------------------------------------------------------------------------

double grad_check(const std::function<DiffTensor(Tape&, DiffTensor)>& f, const Shape& shape,
                  std::span<const double> x0, double eps) {
    if (eps < 1e-7 || eps > 1e-3) fail("grad_check: eps outside [1e-7, 1e-3]");
    std::vector<double> base(x0.begin(), x0.end());

    const auto eval = [&](const std::vector<double>& x, bool with_grad,
                          std::vector<double>* grad_out) -> double {
        Tape tape;
        DiffTensor leaf = tape.leaf(shape, x, with_grad);
        DiffTensor y = f(tape, leaf);
        const double v = y.item();
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite forward value");
        if (with_grad) {
            tape.backward(y);
            grad_out->assign(leaf.grad().begin(), leaf.grad().end());
        }
        return v;
    };

    std::vector<double> analytic;
    eval(base, true, &analytic);

    double max_rel = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> xp = base, xm = base;
        xp[i] += eps;
        xm[i] -= eps;
        const double fp = eval(xp, false, nullptr);
        const double fm = eval(xm, false, nullptr);
        const double central = (fp - fm) / (2.0 * eps);
        const double rel = std::fabs(analytic[i] - central) / std::max(1.0, std::fabs(central));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace dlif
