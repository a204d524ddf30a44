#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lsplat/parallel_for.hpp"
#include "lsplat/rng.hpp"

namespace lsplat {

using Shape = std::vector<int>;

namespace detail {

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline long numel_of(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

template <typename R>
using EMat = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename R>
using EMap = Eigen::Map<EMat<R>>;
template <typename R>
using ECMap = Eigen::Map<const EMat<R>>;

}  // namespace detail

template <typename R>
class Graph;

// Dense row-major tensor. Data is shared between copies and immutable by
// convention once an op has produced it; tensors not attached to a Graph are
// plain values, safe to share across threads.
template <typename R>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<R>>(detail::numel_of(shape_), R(0))) {}

    Tensor(Shape shape, std::vector<R> values) : shape_(std::move(shape)) {
        detail::check(detail::numel_of(shape_) == static_cast<long>(values.size()),
                      "tensor: shape does not match value count");
        data_ = std::make_shared<std::vector<R>>(std::move(values));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, R v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }

    static Tensor scalar(R v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(i); }
    long numel() const { return data_ ? static_cast<long>(data_->size()) : 0; }
    bool empty() const { return !data_; }

    R* data() { return data_->data(); }
    const R* data() const { return data_->data(); }
    const std::shared_ptr<std::vector<R>>& buffer() const { return data_; }

    R& operator[](long i) { return (*data_)[i]; }
    R operator[](long i) const { return (*data_)[i]; }
    R& at(int i, int j) { return (*data_)[static_cast<long>(i) * shape_[1] + j]; }
    R at(int i, int j) const { return (*data_)[static_cast<long>(i) * shape_[1] + j]; }

    // Rows/cols of a 2-D view: tensors of rank > 2 flatten leading dims.
    int rows() const { return static_cast<int>(numel() / shape_.back()); }
    int cols() const { return shape_.back(); }

    Graph<R>* graph() const { return graph_; }
    int node() const { return node_; }
    bool requires_grad() const { return graph_ != nullptr; }

    // Same values, no graph attachment (stop-gradient).
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (R v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    friend class Graph<R>;
    Shape shape_;
    std::shared_ptr<std::vector<R>> data_;
    Graph<R>* graph_ = nullptr;
    int node_ = -1;
};

// Reverse-mode tape. Nodes are recorded in execution order, so iterating in
// reverse is a topological traversal: every consumer of a node runs before the
// node itself, and gradients accumulate additively in a fixed order.
template <typename R>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor<R> leaf(const Tensor<R>& value) {
        Tensor<R> t = value.detached();
        t.graph_ = this;
        t.node_ = add_node(t.numel(), {}, nullptr);
        return t;
    }

    using BackwardFn = std::function<void(Graph&, int)>;

    void record(Tensor<R>& out, std::vector<int> inputs, BackwardFn fn) {
        out.graph_ = this;
        out.node_ = add_node(out.numel(), std::move(inputs), std::move(fn));
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    void backward(const Tensor<R>& loss) {
        detail::check(loss.graph_ == this, "backward: tensor not on this graph");
        detail::check(loss.numel() == 1, "backward: loss must be scalar");
        start_backward();
        grads(loss.node_)[0] += R(1);
        sweep();
    }

    // Seeds several outputs with explicit adjoints, then runs one sweep.
    void backward_seeded(const std::vector<std::pair<Tensor<R>, std::vector<R>>>& seeds) {
        start_backward();
        for (const auto& [t, adj] : seeds) {
            detail::check(t.graph_ == this, "backward_seeded: tensor not on this graph");
            detail::check(static_cast<long>(adj.size()) == t.numel(), "backward_seeded: adjoint size mismatch");
            auto& gbuf = grads(t.node_);
            for (long i = 0; i < t.numel(); ++i) gbuf[i] += adj[i];
        }
        sweep();
    }

    Tensor<R> grad(const Tensor<R>& t) const {
        detail::check(t.graph_ == this, "grad: tensor not on this graph");
        Tensor<R> g(t.shape());
        const auto& buf = grad_[t.node_];
        if (!buf.empty()) std::copy(buf.begin(), buf.end(), g.data());
        return g;
    }

    std::vector<R>& grads(int node) {
        auto& buf = grad_[node];
        if (buf.empty()) buf.assign(nodes_[node].numel, R(0));
        return buf;
    }

    bool has_grad(int node) const { return !grad_[node].empty(); }

private:
    struct Node {
        long numel;
        std::vector<int> inputs;
        BackwardFn backward;
    };

    int add_node(long numel, std::vector<int> inputs, BackwardFn fn) {
        nodes_.push_back(Node{numel, std::move(inputs), std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void start_backward() {
        grad_.clear();
        grad_.resize(nodes_.size());
    }

    void sweep() {
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            if (!grad_[i].empty() && nodes_[i].backward) nodes_[i].backward(*this, i);
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<R>> grad_;
};

namespace detail {

template <typename R>
Graph<R>* merge_graph(std::initializer_list<const Tensor<R>*> ts) {
    Graph<R>* g = nullptr;
    for (const Tensor<R>* t : ts) {
        if (t->graph() == nullptr) continue;
        check(g == nullptr || g == t->graph(), "op: operands live on different graphs");
        g = t->graph();
    }
    return g;
}

template <typename R>
int node_or_neg(Graph<R>* g, const Tensor<R>& t) {
    return t.graph() == g && g != nullptr ? t.node() : -1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename R, typename F, typename DF>
Tensor<R> unary_op(const Tensor<R>& x, F f, DF dfdx) {
    Tensor<R> out(x.shape());
    const long n = x.numel();
    const R* xv = x.data();
    R* ov = out.data();
    for (long i = 0; i < n; ++i) ov[i] = f(xv[i]);
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        auto xbuf = x.buffer();
        g->record(out, {nx}, [nx, xbuf, n, dfdx](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            const R* xv2 = xbuf->data();
            for (long i = 0; i < n; ++i) gx[i] += go[i] * dfdx(xv2[i]);
        });
    }
    return out;
}

template <typename R>
Tensor<R> sigmoid(const Tensor<R>& x) {
    return unary_op(
        x, [](R v) { return R(1) / (R(1) + std::exp(-v)); },
        [](R v) {
            const R s = R(1) / (R(1) + std::exp(-v));
            return s * (R(1) - s);
        });
}

template <typename R>
Tensor<R> silu(const Tensor<R>& x) {
    return unary_op(
        x,
        [](R v) { return v / (R(1) + std::exp(-v)); },
        [](R v) {
            const R s = R(1) / (R(1) + std::exp(-v));
            return s * (R(1) + v * (R(1) - s));
        });
}

template <typename R>
Tensor<R> softplus(const Tensor<R>& x) {
    return unary_op(
        x, [](R v) { return v > R(30) ? v : std::log1p(std::exp(v)); },
        [](R v) { return R(1) / (R(1) + std::exp(-v)); });
}

template <typename R>
Tensor<R> exp_t(const Tensor<R>& x) {
    return unary_op(x, [](R v) { return std::exp(v); }, [](R v) { return std::exp(v); });
}

template <typename R>
Tensor<R> sqrt_t(const Tensor<R>& x) {
    return unary_op(x, [](R v) { return std::sqrt(v); },
                    [](R v) { return R(0.5) / std::sqrt(v); });
}

template <typename R>
Tensor<R> abs_t(const Tensor<R>& x) {
    return unary_op(x, [](R v) { return std::abs(v); },
                    [](R v) { return v >= R(0) ? R(1) : R(-1); });
}

template <typename R>
Tensor<R> reciprocal(const Tensor<R>& x) {
    return unary_op(x, [](R v) { return R(1) / v; },
                    [](R v) { return R(-1) / (v * v); });
}

template <typename R>
Tensor<R> clamp(const Tensor<R>& x, R lo, R hi) {
    return unary_op(
        x, [lo, hi](R v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](R v) { return (v < lo || v > hi) ? R(0) : R(1); });
}

template <typename R>
Tensor<R> scale(const Tensor<R>& x, R c) {
    return unary_op(x, [c](R v) { return c * v; }, [c](R) { return c; });
}

template <typename R>
Tensor<R> add_scalar(const Tensor<R>& x, R c) {
    return unary_op(x, [c](R v) { return v + c; }, [](R) { return R(1); });
}

template <typename R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b) {
    detail::check(a.shape() == b.shape(), "add: shape mismatch");
    Tensor<R> out(a.shape());
    const long n = a.numel();
    for (long i = 0; i < n; ++i) out[i] = a[i] + b[i];
    if (Graph<R>* g = detail::merge_graph<R>({&a, &b})) {
        const int na = detail::node_or_neg(g, a), nb = detail::node_or_neg(g, b);
        g->record(out, {na, nb}, [na, nb, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (na >= 0) {
                R* ga = gg.grads(na).data();
                for (long i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (nb >= 0) {
                R* gb = gg.grads(nb).data();
                for (long i = 0; i < n; ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b) {
    detail::check(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor<R> out(a.shape());
    const long n = a.numel();
    for (long i = 0; i < n; ++i) out[i] = a[i] - b[i];
    if (Graph<R>* g = detail::merge_graph<R>({&a, &b})) {
        const int na = detail::node_or_neg(g, a), nb = detail::node_or_neg(g, b);
        g->record(out, {na, nb}, [na, nb, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (na >= 0) {
                R* ga = gg.grads(na).data();
                for (long i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (nb >= 0) {
                R* gb = gg.grads(nb).data();
                for (long i = 0; i < n; ++i) gb[i] -= go[i];
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b) {
    detail::check(a.shape() == b.shape(), "mul: shape mismatch");
    Tensor<R> out(a.shape());
    const long n = a.numel();
    for (long i = 0; i < n; ++i) out[i] = a[i] * b[i];
    if (Graph<R>* g = detail::merge_graph<R>({&a, &b})) {
        const int na = detail::node_or_neg(g, a), nb = detail::node_or_neg(g, b);
        auto abuf = a.buffer(), bbuf = b.buffer();
        g->record(out, {na, nb}, [na, nb, n, abuf, bbuf](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (na >= 0) {
                R* ga = gg.grads(na).data();
                const R* bv = bbuf->data();
                for (long i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
            }
            if (nb >= 0) {
                R* gb = gg.grads(nb).data();
                const R* av = abuf->data();
                for (long i = 0; i < n; ++i) gb[i] += go[i] * av[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops

namespace detail {

// C (m x n) = op(A) * op(B), optionally accumulating. Row-split across the
// pool for large products; each output element is produced by exactly one
// range, so the result is independent of thread scheduling.
template <typename R, typename AExpr, typename BExpr>
void gemm_into(R* cdata, long m, long n, const AExpr& A, const BExpr& B, bool accumulate) {
    EMap<R> C(cdata, m, n);
    const long flops = m * n * static_cast<long>(A.cols());
    auto run = [&](long r0, long r1) {
        if (accumulate)
            C.middleRows(r0, r1 - r0).noalias() += A.middleRows(r0, r1 - r0) * B;
        else
            C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B;
    };
    if (flops > 2'000'000 && m >= 4 && ThreadPool::instance().size() > 1) {
        parallel_for_ranges(m, run);
    } else {
        run(0, m);
    }
}

template <typename R>
void matmul_dispatch(R* c, long m, long n, const R* a, long ar, long ac, bool ta, const R* b,
                     long br, long bc, bool tb, bool accumulate) {
    ECMap<R> A(a, ar, ac);
    ECMap<R> B(b, br, bc);
    if (!ta && !tb)
        gemm_into(c, m, n, A, B, accumulate);
    else if (ta && !tb)
        gemm_into(c, m, n, A.transpose(), B, accumulate);
    else if (!ta && tb)
        gemm_into(c, m, n, A, B.transpose(), accumulate);
    else
        gemm_into(c, m, n, A.transpose(), B.transpose(), accumulate);
}

}  // namespace detail

// C = op(a) * op(b) with op = transpose when the flag is set.
// Backward: dA = dC*B^T and dB = A^T*dC in the untransposed case, with the
// usual flag bookkeeping otherwise.
template <typename R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b, bool ta = false, bool tb = false) {
    detail::check(a.ndim() == 2 && b.ndim() == 2, "matmul: rank-2 tensors required");
    const long ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
    const long m = ta ? ac : ar, k = ta ? ar : ac;
    const long kb = tb ? bc : br, n = tb ? br : bc;
    detail::check(k == kb, "matmul: inner dimensions do not match");
    Tensor<R> out(Shape{static_cast<int>(m), static_cast<int>(n)});
    detail::matmul_dispatch(out.data(), m, n, a.data(), ar, ac, ta, b.data(), br, bc, tb, false);
    if (Graph<R>* g = detail::merge_graph<R>({&a, &b})) {
        const int na = detail::node_or_neg(g, a), nb = detail::node_or_neg(g, b);
        auto abuf = a.buffer(), bbuf = b.buffer();
        g->record(out, {na, nb},
                  [na, nb, abuf, bbuf, ar, ac, br, bc, m, n, ta, tb](Graph<R>& gg, int self) {
                      const R* go = gg.grads(self).data();
                      const R* av = abuf->data();
                      const R* bv = bbuf->data();
                      if (na >= 0) {
                          R* ga = gg.grads(na).data();
                          if (!ta && !tb)  // dA = dC * B^T
                              detail::matmul_dispatch(ga, ar, ac, go, m, n, false, bv, br, bc, true, true);
                          else if (!ta && tb)  // dA = dC * B
                              detail::matmul_dispatch(ga, ar, ac, go, m, n, false, bv, br, bc, false, true);
                          else if (ta && !tb)  // dA = B * dC^T
                              detail::matmul_dispatch(ga, ar, ac, bv, br, bc, false, go, m, n, true, true);
                          else  // dA = B^T * dC^T
                              detail::matmul_dispatch(ga, ar, ac, bv, br, bc, true, go, m, n, true, true);
                      }
                      if (nb >= 0) {
                          R* gb = gg.grads(nb).data();
                          if (!ta && !tb)  // dB = A^T * dC
                              detail::matmul_dispatch(gb, br, bc, av, ar, ac, true, go, m, n, false, true);
                          else if (!ta && tb)  // dB = dC^T * A
                              detail::matmul_dispatch(gb, br, bc, go, m, n, true, av, ar, ac, false, true);
                          else if (ta && !tb)  // dB = A * dC
                              detail::matmul_dispatch(gb, br, bc, av, ar, ac, false, go, m, n, false, true);
                          else  // dB = dC^T * A^T
                              detail::matmul_dispatch(gb, br, bc, go, m, n, true, av, ar, ac, true, true);
                      }
                  });
    }
    return out;
}

template <typename R>
Tensor<R> transpose(const Tensor<R>& x) {
    detail::check(x.ndim() == 2, "transpose: rank-2 tensor required");
    const int m = x.dim(0), n = x.dim(1);
    Tensor<R> out(Shape{n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<long>(j) * m + i] = x[static_cast<long>(i) * n + j];
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        g->record(out, {nx}, [nx, m, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gx[static_cast<long>(i) * n + j] += go[static_cast<long>(j) * m + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

template <typename R>
Tensor<R> sum(const Tensor<R>& x) {
    Tensor<R> out({1});
    R acc = 0;
    const long n = x.numel();
    for (long i = 0; i < n; ++i) acc += x[i];
    out[0] = acc;
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        g->record(out, {nx}, [nx, n](Graph<R>& gg, int self) {
            const R go = gg.grads(self)[0];
            R* gx = gg.grads(nx).data();
            for (long i = 0; i < n; ++i) gx[i] += go;
        });
    }
    return out;
}

// out = x * s[0] where s is a scalar tensor.
template <typename R>
Tensor<R> mul_scalar_t(const Tensor<R>& x, const Tensor<R>& s) {
    detail::check(s.numel() == 1, "mul_scalar_t: scalar tensor required");
    Tensor<R> out(x.shape());
    const long n = x.numel();
    const R sv = s[0];
    for (long i = 0; i < n; ++i) out[i] = x[i] * sv;
    if (Graph<R>* g = detail::merge_graph<R>({&x, &s})) {
        const int nx = detail::node_or_neg(g, x), ns = detail::node_or_neg(g, s);
        auto xbuf = x.buffer();
        g->record(out, {nx, ns}, [nx, ns, n, sv, xbuf](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (nx >= 0) {
                R* gx = gg.grads(nx).data();
                for (long i = 0; i < n; ++i) gx[i] += go[i] * sv;
            }
            if (ns >= 0) {
                R acc = 0;
                const R* xv = xbuf->data();
                for (long i = 0; i < n; ++i) acc += go[i] * xv[i];
                gg.grads(ns)[0] += acc;
            }
        });
    }
    return out;
}

// Adds a length-n vector to every row of an (m x n) tensor.
template <typename R>
Tensor<R> add_rowvec(const Tensor<R>& x, const Tensor<R>& b) {
    const int n = x.cols(), m = x.rows();
    detail::check(b.numel() == n, "add_rowvec: vector length mismatch");
    Tensor<R> out(x.shape());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<long>(i) * n + j] = x[static_cast<long>(i) * n + j] + b[j];
    if (Graph<R>* g = detail::merge_graph<R>({&x, &b})) {
        const int nx = detail::node_or_neg(g, x), nb = detail::node_or_neg(g, b);
        g->record(out, {nx, nb}, [nx, nb, m, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (nx >= 0) {
                R* gx = gg.grads(nx).data();
                for (long i = 0; i < static_cast<long>(m) * n; ++i) gx[i] += go[i];
            }
            if (nb >= 0) {
                R* gb = gg.grads(nb).data();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb[j] += go[static_cast<long>(i) * n + j];
            }
        });
    }
    return out;
}

// out[i, :] = x[i, :] * s[i].
template <typename R>
Tensor<R> scale_rows(const Tensor<R>& x, const Tensor<R>& s) {
    const int n = x.cols(), m = x.rows();
    detail::check(s.numel() == m, "scale_rows: row-scale length mismatch");
    Tensor<R> out(x.shape());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<long>(i) * n + j] = x[static_cast<long>(i) * n + j] * s[i];
    if (Graph<R>* g = detail::merge_graph<R>({&x, &s})) {
        const int nx = detail::node_or_neg(g, x), ns = detail::node_or_neg(g, s);
        auto xbuf = x.buffer(), sbuf = s.buffer();
        g->record(out, {nx, ns}, [nx, ns, m, n, xbuf, sbuf](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            if (nx >= 0) {
                R* gx = gg.grads(nx).data();
                const R* sv = sbuf->data();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gx[static_cast<long>(i) * n + j] += go[static_cast<long>(i) * n + j] * sv[i];
            }
            if (ns >= 0) {
                R* gs = gg.grads(ns).data();
                const R* xv = xbuf->data();
                for (int i = 0; i < m; ++i) {
                    R acc = 0;
                    for (int j = 0; j < n; ++j) acc += go[static_cast<long>(i) * n + j] * xv[static_cast<long>(i) * n + j];
                    gs[i] += acc;
                }
            }
        });
    }
    return out;
}

// Numerically stabilized row softmax (max subtraction per row).
template <typename R>
Tensor<R> softmax_rows(const Tensor<R>& x) {
    const int n = x.cols(), m = x.rows();
    Tensor<R> out(x.shape());
    for (int i = 0; i < m; ++i) {
        const R* row = x.data() + static_cast<long>(i) * n;
        R* orow = out.data() + static_cast<long>(i) * n;
        R mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        R denom = 0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= denom;
    }
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        auto obuf = out.buffer();
        g->record(out, {nx}, [nx, m, n, obuf](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            const R* y = obuf->data();
            for (int i = 0; i < m; ++i) {
                const long off = static_cast<long>(i) * n;
                R dot = 0;
                for (int j = 0; j < n; ++j) dot += go[off + j] * y[off + j];
                for (int j = 0; j < n; ++j) gx[off + j] += y[off + j] * (go[off + j] - dot);
            }
        });
    }
    return out;
}

inline constexpr double kRmsNormEps = 1e-6;

// y[i,:] = x[i,:] / sqrt(mean(x[i,:]^2) + eps) * gain
template <typename R>
Tensor<R> rms_norm(const Tensor<R>& x, const Tensor<R>& gain) {
    const int n = x.cols(), m = x.rows();
    detail::check(gain.numel() == n, "rms_norm: gain length must equal last dim");
    Tensor<R> out(x.shape());
    std::vector<R> rinv(m);
    for (int i = 0; i < m; ++i) {
        const R* row = x.data() + static_cast<long>(i) * n;
        R ms = 0;
        for (int j = 0; j < n; ++j) ms += row[j] * row[j];
        ms /= n;
        rinv[i] = R(1) / std::sqrt(ms + R(kRmsNormEps));
        R* orow = out.data() + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = row[j] * rinv[i] * gain[j];
    }
    if (Graph<R>* g = detail::merge_graph<R>({&x, &gain})) {
        const int nx = detail::node_or_neg(g, x), ng = detail::node_or_neg(g, gain);
        auto xbuf = x.buffer(), gbuf = gain.buffer();
        auto rshared = std::make_shared<std::vector<R>>(std::move(rinv));
        g->record(out, {nx, ng}, [nx, ng, m, n, xbuf, gbuf, rshared](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            const R* xv = xbuf->data();
            const R* gv = gbuf->data();
            const R* ri = rshared->data();
            if (nx >= 0) {
                R* gx = gg.grads(nx).data();
                for (int i = 0; i < m; ++i) {
                    const long off = static_cast<long>(i) * n;
                    R dot = 0;
                    for (int j = 0; j < n; ++j) dot += go[off + j] * gv[j] * xv[off + j];
                    const R r = ri[i], r3 = r * r * r;
                    for (int j = 0; j < n; ++j)
                        gx[off + j] += gv[j] * r * go[off + j] - (r3 / n) * xv[off + j] * dot;
                }
            }
            if (ng >= 0) {
                R* ggain = gg.grads(ng).data();
                for (int i = 0; i < m; ++i) {
                    const long off = static_cast<long>(i) * n;
                    for (int j = 0; j < n; ++j) ggain[j] += go[off + j] * xv[off + j] * ri[i];
                }
            }
        });
    }
    return out;
}

// y[i,:] = x[i,:] / max(||x[i,:]||, eps)
template <typename R>
Tensor<R> l2_normalize_rows(const Tensor<R>& x, R eps = R(1e-12)) {
    const int n = x.cols(), m = x.rows();
    Tensor<R> out(x.shape());
    std::vector<R> rnorm(m);
    for (int i = 0; i < m; ++i) {
        const R* row = x.data() + static_cast<long>(i) * n;
        R ss = 0;
        for (int j = 0; j < n; ++j) ss += row[j] * row[j];
        rnorm[i] = std::max(std::sqrt(ss), eps);
        R* orow = out.data() + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = row[j] / rnorm[i];
    }
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        auto xbuf = x.buffer();
        auto rshared = std::make_shared<std::vector<R>>(std::move(rnorm));
        g->record(out, {nx}, [nx, m, n, xbuf, rshared](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            const R* xv = xbuf->data();
            for (int i = 0; i < m; ++i) {
                const long off = static_cast<long>(i) * n;
                const R r = (*rshared)[i];
                R dot = 0;
                for (int j = 0; j < n; ++j) dot += go[off + j] * xv[off + j];
                for (int j = 0; j < n; ++j)
                    gx[off + j] += go[off + j] / r - xv[off + j] * dot / (r * r * r);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layout ops

template <typename R>
Tensor<R> reshape(const Tensor<R>& x, Shape shape) {
    detail::check(detail::numel_of(shape) == x.numel(), "reshape: element count mismatch");
    Tensor<R> out(std::move(shape), std::vector<R>(x.data(), x.data() + x.numel()));
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        const long n = x.numel();
        g->record(out, {nx}, [nx, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            for (long i = 0; i < n; ++i) gx[i] += go[i];
        });
    }
    return out;
}

template <typename R>
Tensor<R> slice_rows(const Tensor<R>& x, int r0, int r1) {
    const int n = x.cols(), m = x.rows();
    detail::check(0 <= r0 && r0 < r1 && r1 <= m, "slice_rows: bad range");
    Tensor<R> out(Shape{r1 - r0, n});
    std::copy(x.data() + static_cast<long>(r0) * n, x.data() + static_cast<long>(r1) * n, out.data());
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        g->record(out, {nx}, [nx, r0, r1, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            const long len = static_cast<long>(r1 - r0) * n;
            for (long i = 0; i < len; ++i) gx[static_cast<long>(r0) * n + i] += go[i];
        });
    }
    return out;
}

template <typename R>
Tensor<R> slice_cols(const Tensor<R>& x, int c0, int c1) {
    const int n = x.cols(), m = x.rows();
    detail::check(0 <= c0 && c0 < c1 && c1 <= n, "slice_cols: bad range");
    const int w = c1 - c0;
    Tensor<R> out(Shape{m, w});
    for (int i = 0; i < m; ++i)
        std::copy(x.data() + static_cast<long>(i) * n + c0, x.data() + static_cast<long>(i) * n + c1,
                  out.data() + static_cast<long>(i) * w);
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        g->record(out, {nx}, [nx, m, n, c0, w](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) gx[static_cast<long>(i) * n + c0 + j] += go[static_cast<long>(i) * w + j];
        });
    }
    return out;
}

template <typename R>
Tensor<R> concat_rows(const std::vector<Tensor<R>>& parts) {
    detail::check(!parts.empty(), "concat_rows: empty input");
    const int n = parts[0].cols();
    int m = 0;
    for (const auto& p : parts) {
        detail::check(p.cols() == n, "concat_rows: column mismatch");
        m += p.rows();
    }
    Tensor<R> out(Shape{m, n});
    long off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.numel(), out.data() + off);
        off += p.numel();
    }
    Graph<R>* g = nullptr;
    for (const auto& p : parts)
        if (p.graph()) {
            detail::check(g == nullptr || g == p.graph(), "concat_rows: mixed graphs");
            g = p.graph();
        }
    if (g) {
        std::vector<int> ids;
        std::vector<long> sizes;
        for (const auto& p : parts) {
            ids.push_back(detail::node_or_neg(g, p));
            sizes.push_back(p.numel());
        }
        g->record(out, ids, [ids, sizes](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            long off2 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (ids[k] >= 0) {
                    R* gp = gg.grads(ids[k]).data();
                    for (long i = 0; i < sizes[k]; ++i) gp[i] += go[off2 + i];
                }
                off2 += sizes[k];
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> concat_cols(const std::vector<Tensor<R>>& parts) {
    detail::check(!parts.empty(), "concat_cols: empty input");
    const int m = parts[0].rows();
    int n = 0;
    for (const auto& p : parts) {
        detail::check(p.rows() == m, "concat_cols: row mismatch");
        n += p.cols();
    }
    Tensor<R> out(Shape{m, n});
    int coff = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            std::copy(p.data() + static_cast<long>(i) * w, p.data() + static_cast<long>(i + 1) * w,
                      out.data() + static_cast<long>(i) * n + coff);
        coff += w;
    }
    Graph<R>* g = nullptr;
    for (const auto& p : parts)
        if (p.graph()) {
            detail::check(g == nullptr || g == p.graph(), "concat_cols: mixed graphs");
            g = p.graph();
        }
    if (g) {
        std::vector<int> ids;
        std::vector<int> widths;
        for (const auto& p : parts) {
            ids.push_back(detail::node_or_neg(g, p));
            widths.push_back(p.cols());
        }
        g->record(out, ids, [ids, widths, m, n](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            int coff2 = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const int w = widths[k];
                if (ids[k] >= 0) {
                    R* gp = gg.grads(ids[k]).data();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j) gp[static_cast<long>(i) * w + j] += go[static_cast<long>(i) * n + coff2 + j];
                }
                coff2 += w;
            }
        });
    }
    return out;
}

// out[i, :] = x[idx[i], :]; idx entries of -1 produce zero rows (used for
// zero padding in im2col-style gathers). Backward is a scatter-add in row
// order, deterministic.
template <typename R>
Tensor<R> gather_rows(const Tensor<R>& x, const std::shared_ptr<std::vector<long>>& idx) {
    const int n = x.cols();
    const long m_out = static_cast<long>(idx->size());
    const long m_in = x.rows();
    Tensor<R> out(Shape{static_cast<int>(m_out), n});
    for (long i = 0; i < m_out; ++i) {
        const long src = (*idx)[i];
        detail::check(src < m_in, "gather_rows: index out of range");
        if (src >= 0)
            std::copy(x.data() + src * n, x.data() + (src + 1) * n, out.data() + i * n);
    }
    if (Graph<R>* g = detail::merge_graph<R>({&x})) {
        const int nx = x.node();
        g->record(out, {nx}, [nx, idx, n, m_out](Graph<R>& gg, int self) {
            const R* go = gg.grads(self).data();
            R* gx = gg.grads(nx).data();
            for (long i = 0; i < m_out; ++i) {
                const long src = (*idx)[i];
                if (src < 0) continue;
                for (int j = 0; j < n; ++j) gx[src * n + j] += go[i * n + j];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

// Compares the reverse-mode gradient of a scalar-valued function against
// central differences, coordinate by coordinate. Returns the max relative
// error; coordinates where both gradients are ~0 contribute zero.
template <typename R, typename F>
R grad_check(F f, const Tensor<R>& x, R h) {
    Graph<R> g;
    Tensor<R> xl = g.leaf(x);
    Tensor<R> y = f(g, xl);
    detail::check(y.numel() == 1, "grad_check: function output must be scalar");
    Tensor<R> analytic(x.shape());
    if (y.graph() == &g) {  // constant outputs have an all-zero gradient
        g.backward(y);
        analytic = g.grad(xl);
    }

    auto eval = [&](const Tensor<R>& xv) -> R {
        Graph<R> g2;
        Tensor<R> out = f(g2, g2.leaf(xv));
        return out[0];
    };

    R max_rel = 0;
    Tensor<R> xp(x.shape()), xm(x.shape());
    for (long i = 0; i < x.numel(); ++i) {
        std::copy(x.data(), x.data() + x.numel(), xp.data());
        std::copy(x.data(), x.data() + x.numel(), xm.data());
        xp[i] += h;
        xm[i] -= h;
        const R fd = (eval(xp) - eval(xm)) / (2 * h);
        const R a = analytic[i];
        const R denom = std::max(std::abs(a), std::abs(fd));
        // Below this scale central differences cannot resolve the gradient.
        if (denom < R(1e-7)) continue;
        max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Random init helpers

template <typename R>
Tensor<R> randn(Shape shape, Rng& rng, R stddev = R(1), R mean = R(0)) {
    Tensor<R> t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<R>(rng.normal(mean, stddev));
    return t;
}

template <typename R>
Tensor<R> rand_uniform(Shape shape, Rng& rng, R lo = R(0), R hi = R(1)) {
    Tensor<R> t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<R>(rng.uniform(lo, hi));
    return t;
}

}  // namespace lsplat
