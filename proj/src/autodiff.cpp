// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/autodiff.hpp"

#include "splatseg/parallel.hpp"

#include <cmath>
#include <cstring>

namespace splatseg::ad {

struct Graph::Node {
    Tensor value;
    Tensor grad;
    bool needsGrad = false;
    std::vector<int> parents;
    std::function<void(Graph&, int)> back;
};

Graph::Graph() = default;
Graph::~Graph() = default;

int Graph::check(Value v) const
{
    if (!v.valid() || size_t(v.id) >= mNodes.size())
        raise(ErrorKind::IndexOutOfRange, "value handle does not belong to this graph");
    return v.id;
}

Graph::Node& Graph::node(int id) { return mNodes[size_t(id)]; }
const Graph::Node& Graph::node(int id) const { return mNodes[size_t(id)]; }

size_t Graph::size() const { return mNodes.size(); }

const Tensor& Graph::value(Value v) const { return node(check(v)).value; }

bool Graph::needs_grad(Value v) const { return node(check(v)).needsGrad; }

const Tensor& Graph::grad(Value v) const
{
    const Node& n = node(check(v));
    if (!mBackwardDone)
        raise(ErrorKind::InvariantViolation, "grad() called before backward()");
    if (!n.needsGrad)
        raise(ErrorKind::InvariantViolation, "node does not track gradients");
    return n.grad;
}

Value Graph::newNode(Tensor value, std::vector<int> parents,
    std::function<void(Graph&, int)> back)
{
    if (mConsumed)
        raise(ErrorKind::GraphConsumed, "graph already differentiated");
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (int p : n.parents) {
        if (mNodes[size_t(p)].needsGrad) {
            n.needsGrad = true;
            break;
        }
    }
    if (n.needsGrad) {
        n.grad = Tensor(n.value.shape);
        n.back = std::move(back);
    }
    mNodes.push_back(std::move(n));
    return Value{int(mNodes.size()) - 1};
}

Value Graph::input(Tensor t)
{
    if (mConsumed)
        raise(ErrorKind::GraphConsumed, "graph already differentiated");
    Node n;
    n.needsGrad = t.requires_grad;
    n.value = std::move(t);
    if (n.needsGrad) n.grad = Tensor(n.value.shape);
    mNodes.push_back(std::move(n));
    return Value{int(mNodes.size()) - 1};
}

Value Graph::constant(Tensor t)
{
    t.requires_grad = false;
    return input(std::move(t));
}

Value Graph::scalar(double v) { return constant(Tensor::scalar(v)); }

// ---------------------------------------------------------------------------
// dense kernels

void matmul_accumulate(const double* a, const double* b, double* c, int n, int k, int m)
{
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const double* arow = a + i * k;
            double* crow = c + i * m;
            for (int p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* brow = b + int64_t(p) * m;
                for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

namespace {

// c (n,k) += a (n,m) * b(k,m)^T
void matmul_bt_accumulate(const double* a, const double* b, double* c, int n, int m, int k)
{
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const double* arow = a + i * m;
            double* crow = c + i * k;
            for (int p = 0; p < k; ++p) {
                const double* brow = b + int64_t(p) * m;
                double acc = 0.0;
                for (int j = 0; j < m; ++j) acc += arow[j] * brow[j];
                crow[p] += acc;
            }
        }
    });
}

// c (k,m) += a (n,k)^T * g (n,m)
void matmul_at_accumulate(const double* a, const double* g, double* c, int n, int k, int m)
{
    parallel_for(k, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
            double* crow = c + p * m;
            for (int i = 0; i < n; ++i) {
                const double av = a[int64_t(i) * k + p];
                const double* grow = g + int64_t(i) * m;
                for (int j = 0; j < m; ++j) crow[j] += av * grow[j];
            }
        }
    });
}

void requireRank2(const Tensor& t, const char* op)
{
    if (t.rank() != 2)
        raise(ErrorKind::ShapeMismatch, std::string(op) + " requires rank-2 operands, got " + shape_str(t));
}

} // namespace

// ---------------------------------------------------------------------------
// ops

Value Graph::matmul(Value av, Value bv)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    requireRank2(a, "matmul");
    requireRank2(b, "matmul");
    if (a.cols() != b.rows())
        raise(ErrorKind::ShapeMismatch, "matmul inner dims differ: " + shape_str(a) + " x " + shape_str(b));
    const int n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out({n, m});
    matmul_accumulate(a.data.data(), b.data.data(), out.data.data(), n, k, m);
    return newNode(std::move(out), {ai, bi}, [ai, bi, n, k, m](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        if (an.needsGrad)
            matmul_bt_accumulate(go.data.data(), bn.value.data.data(), an.grad.data.data(), n, m, k);
        if (bn.needsGrad)
            matmul_at_accumulate(an.value.data.data(), go.data.data(), bn.grad.data.data(), n, k, m);
    });
}

Value Graph::matvec(Value av, Value xv)
{
    int ai = check(av), xi = check(xv);
    const Tensor& a = node(ai).value;
    const Tensor& x = node(xi).value;
    requireRank2(a, "matvec");
    if (x.rank() != 1 || x.shape[0] != a.cols())
        raise(ErrorKind::ShapeMismatch, "matvec shapes differ: " + shape_str(a) + " x " + shape_str(x));
    const int n = a.rows(), m = a.cols();
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* arow = a.data.data() + size_t(i) * size_t(m);
        for (int j = 0; j < m; ++j) acc += arow[j] * x.data[size_t(j)];
        out.data[size_t(i)] = acc;
    }
    return newNode(std::move(out), {ai, xi}, [ai, xi, n, m](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& xn = g.node(xi);
        if (an.needsGrad)
            for (int i = 0; i < n; ++i) {
                const double gi = go.data[size_t(i)];
                double* drow = an.grad.data.data() + size_t(i) * size_t(m);
                for (int j = 0; j < m; ++j) drow[j] += gi * xn.value.data[size_t(j)];
            }
        if (xn.needsGrad)
            for (int i = 0; i < n; ++i) {
                const double gi = go.data[size_t(i)];
                const double* arow = an.value.data.data() + size_t(i) * size_t(m);
                for (int j = 0; j < m; ++j) xn.grad.data[size_t(j)] += gi * arow[j];
            }
    });
}

Value Graph::add(Value av, Value bv)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    const bool aScalar = a.isScalar(), bScalar = b.isScalar();
    if (!aScalar && !bScalar && !same_shape(a, b))
        raise(ErrorKind::ShapeMismatch, "add shapes differ: " + shape_str(a) + " vs " + shape_str(b));
    Tensor out(aScalar ? b.shape : a.shape);
    const size_t n = out.data.size();
    if (aScalar && !bScalar) {
        const double s = a.data[0];
        for (size_t i = 0; i < n; ++i) out.data[i] = s + b.data[i];
    } else if (bScalar && !aScalar) {
        const double s = b.data[0];
        for (size_t i = 0; i < n; ++i) out.data[i] = a.data[i] + s;
    } else {
        for (size_t i = 0; i < n; ++i) out.data[i] = a.data[i] + b.data[i];
    }
    return newNode(std::move(out), {ai, bi}, [ai, bi, aScalar, bScalar](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        if (an.needsGrad) {
            if (aScalar && !bScalar) {
                double acc = 0.0;
                for (double v : go.data) acc += v;
                an.grad.data[0] += acc;
            } else {
                for (size_t i = 0; i < go.data.size(); ++i) an.grad.data[i] += go.data[i];
            }
        }
        if (bn.needsGrad) {
            if (bScalar && !aScalar) {
                double acc = 0.0;
                for (double v : go.data) acc += v;
                bn.grad.data[0] += acc;
            } else {
                for (size_t i = 0; i < go.data.size(); ++i) bn.grad.data[i] += go.data[i];
            }
        }
    });
}

Value Graph::add_rowvec(Value av, Value bv)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    requireRank2(a, "add_rowvec");
    if (b.rank() != 1)
        raise(ErrorKind::ShapeMismatch, "add_rowvec bias must be rank 1, got " + shape_str(b));
    if (b.shape[0] != a.cols())
        raise(ErrorKind::ShapeMismatch, "add_rowvec width mismatch: " + shape_str(a) + " + " + shape_str(b));
    const int n = a.rows(), m = a.cols();
    Tensor out({n, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) = a.at(i, j) + b.data[size_t(j)];
    return newNode(std::move(out), {ai, bi}, [ai, bi, n, m](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        if (an.needsGrad)
            for (size_t i = 0; i < go.data.size(); ++i) an.grad.data[i] += go.data[i];
        if (bn.needsGrad)
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += go.at(i, j);
                bn.grad.data[size_t(j)] += acc;
            }
    });
}

Value Graph::mul(Value av, Value bv)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    const bool aScalar = a.isScalar(), bScalar = b.isScalar();
    if (!aScalar && !bScalar && !same_shape(a, b))
        raise(ErrorKind::ShapeMismatch, "mul shapes differ: " + shape_str(a) + " vs " + shape_str(b));
    Tensor out(aScalar ? b.shape : a.shape);
    const size_t n = out.data.size();
    if (aScalar && !bScalar) {
        const double s = a.data[0];
        for (size_t i = 0; i < n; ++i) out.data[i] = s * b.data[i];
    } else if (bScalar && !aScalar) {
        const double s = b.data[0];
        for (size_t i = 0; i < n; ++i) out.data[i] = a.data[i] * s;
    } else {
        for (size_t i = 0; i < n; ++i) out.data[i] = a.data[i] * b.data[i];
    }
    return newNode(std::move(out), {ai, bi}, [ai, bi, aScalar, bScalar](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        const Tensor& a = an.value;
        const Tensor& b = bn.value;
        if (an.needsGrad) {
            if (aScalar && !bScalar) {
                double acc = 0.0;
                for (size_t i = 0; i < go.data.size(); ++i) acc += go.data[i] * b.data[i];
                an.grad.data[0] += acc;
            } else if (bScalar && !aScalar) {
                const double s = b.data[0];
                for (size_t i = 0; i < go.data.size(); ++i) an.grad.data[i] += go.data[i] * s;
            } else {
                for (size_t i = 0; i < go.data.size(); ++i) an.grad.data[i] += go.data[i] * b.data[i];
            }
        }
        if (bn.needsGrad) {
            if (bScalar && !aScalar) {
                double acc = 0.0;
                for (size_t i = 0; i < go.data.size(); ++i) acc += go.data[i] * a.data[i];
                bn.grad.data[0] += acc;
            } else if (aScalar && !bScalar) {
                const double s = a.data[0];
                for (size_t i = 0; i < go.data.size(); ++i) bn.grad.data[i] += go.data[i] * s;
            } else {
                for (size_t i = 0; i < go.data.size(); ++i) bn.grad.data[i] += go.data[i] * a.data[i];
            }
        }
    });
}

Value Graph::mul_scalar(Value a, double s) { return mul(a, scalar(s)); }

Value Graph::relu(Value av)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    Tensor out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
    return newNode(std::move(out), {ai}, [ai](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        if (!an.needsGrad) return;
        // subgradient at 0 is taken as 0
        for (size_t i = 0; i < go.data.size(); ++i)
            if (an.value.data[i] > 0.0) an.grad.data[i] += go.data[i];
    });
}

Value Graph::concat(Value av, Value bv, int axis)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    requireRank2(a, "concat");
    requireRank2(b, "concat");
    if (axis != 0 && axis != 1)
        raise(ErrorKind::ShapeMismatch, "concat axis must be 0 or 1");
    Tensor out;
    if (axis == 0) {
        if (a.cols() != b.cols())
            raise(ErrorKind::ShapeMismatch, "concat axis 0 needs equal widths: " + shape_str(a) + " vs " + shape_str(b));
        out = Tensor({a.rows() + b.rows(), a.cols()});
        std::memcpy(out.data.data(), a.data.data(), a.data.size() * sizeof(double));
        std::memcpy(out.data.data() + a.data.size(), b.data.data(), b.data.size() * sizeof(double));
    } else {
        if (a.rows() != b.rows())
            raise(ErrorKind::ShapeMismatch, "concat axis 1 needs equal heights: " + shape_str(a) + " vs " + shape_str(b));
        out = Tensor({a.rows(), a.cols() + b.cols()});
        const int n = a.rows(), ma = a.cols(), mb = b.cols();
        for (int i = 0; i < n; ++i) {
            std::memcpy(out.data.data() + size_t(i) * size_t(ma + mb),
                a.data.data() + size_t(i) * size_t(ma), size_t(ma) * sizeof(double));
            std::memcpy(out.data.data() + size_t(i) * size_t(ma + mb) + size_t(ma),
                b.data.data() + size_t(i) * size_t(mb), size_t(mb) * sizeof(double));
        }
    }
    return newNode(std::move(out), {ai, bi}, [ai, bi, axis](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        if (axis == 0) {
            const size_t na = an.value.data.size();
            if (an.needsGrad)
                for (size_t i = 0; i < na; ++i) an.grad.data[i] += go.data[i];
            if (bn.needsGrad)
                for (size_t i = 0; i < bn.value.data.size(); ++i) bn.grad.data[i] += go.data[na + i];
        } else {
            const int n = an.value.rows(), ma = an.value.cols(), mb = bn.value.cols();
            for (int i = 0; i < n; ++i) {
                const double* grow = go.data.data() + size_t(i) * size_t(ma + mb);
                if (an.needsGrad)
                    for (int j = 0; j < ma; ++j) an.grad.data[size_t(i) * size_t(ma) + size_t(j)] += grow[j];
                if (bn.needsGrad)
                    for (int j = 0; j < mb; ++j) bn.grad.data[size_t(i) * size_t(mb) + size_t(j)] += grow[ma + j];
            }
        }
    });
}

Value Graph::gather_rows(Value av, std::vector<int> indices)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    requireRank2(a, "gather_rows");
    const int n = a.rows(), m = a.cols();
    for (int idx : indices)
        if (idx < 0 || idx >= n)
            raise(ErrorKind::IndexOutOfRange,
                "gather_rows index " + std::to_string(idx) + " outside [0," + std::to_string(n) + ")");
    Tensor out({int(indices.size()), m});
    for (size_t i = 0; i < indices.size(); ++i)
        std::memcpy(out.data.data() + i * size_t(m),
            a.data.data() + size_t(indices[i]) * size_t(m), size_t(m) * sizeof(double));
    return newNode(std::move(out), {ai},
        [ai, m, indices = std::move(indices)](Graph& g, int self) {
            const Tensor& go = g.node(self).grad;
            Node& an = g.node(ai);
            if (!an.needsGrad) return;
            // fixed accumulation order: gather order
            for (size_t i = 0; i < indices.size(); ++i) {
                double* dst = an.grad.data.data() + size_t(indices[i]) * size_t(m);
                const double* src = go.data.data() + i * size_t(m);
                for (int j = 0; j < m; ++j) dst[j] += src[j];
            }
        });
}

Value Graph::scatter_add_rows(Value av, std::vector<int> indices, int outRows)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    requireRank2(a, "scatter_add_rows");
    const int k = a.rows(), m = a.cols();
    if (int(indices.size()) != k)
        raise(ErrorKind::LengthMismatch,
            "scatter_add_rows got " + std::to_string(indices.size()) + " indices for " + std::to_string(k) + " rows");
    for (int idx : indices)
        if (idx < 0 || idx >= outRows)
            raise(ErrorKind::AssignOutOfRange,
                "scatter_add_rows target " + std::to_string(idx) + " outside [0," + std::to_string(outRows) + ")");
    Tensor out({outRows, m});
    for (int i = 0; i < k; ++i) {
        double* dst = out.data.data() + size_t(indices[size_t(i)]) * size_t(m);
        const double* src = a.data.data() + size_t(i) * size_t(m);
        for (int j = 0; j < m; ++j) dst[j] += src[j];
    }
    return newNode(std::move(out), {ai},
        [ai, m, indices = std::move(indices)](Graph& g, int self) {
            const Tensor& go = g.node(self).grad;
            Node& an = g.node(ai);
            if (!an.needsGrad) return;
            for (size_t i = 0; i < indices.size(); ++i) {
                double* dst = an.grad.data.data() + i * size_t(m);
                const double* src = go.data.data() + size_t(indices[i]) * size_t(m);
                for (int j = 0; j < m; ++j) dst[j] += src[j];
            }
        });
}

Value Graph::row_softmax(Value av)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    requireRank2(a, "row_softmax");
    const int n = a.rows(), m = a.cols();
    if (m < 1) raise(ErrorKind::ShapeMismatch, "row_softmax needs at least one column");
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = a.at(i, 0);
        for (int j = 1; j < m; ++j) mx = std::max(mx, a.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < m; ++j) out.at(i, j) *= inv;
    }
    return newNode(std::move(out), {ai}, [ai, n, m](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        const Tensor& p = g.node(self).value;
        Node& an = g.node(ai);
        if (!an.needsGrad) return;
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += go.at(i, j) * p.at(i, j);
            for (int j = 0; j < m; ++j) an.grad.at(i, j) += p.at(i, j) * (go.at(i, j) - dot);
        }
    });
}

Value Graph::softmax_cross_entropy(Value lv, std::vector<int> targets, Reduction reduction)
{
    int ai = check(lv);
    const Tensor& a = node(ai).value;
    requireRank2(a, "softmax_cross_entropy");
    const int n = a.rows(), m = a.cols();
    if (n < 1) raise(ErrorKind::ShapeMismatch, "softmax_cross_entropy needs at least one row");
    if (int(targets.size()) != n)
        raise(ErrorKind::LengthMismatch,
            "softmax_cross_entropy got " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
    for (int t : targets)
        if (t < 0 || t >= m)
            raise(ErrorKind::IndexOutOfRange,
                "softmax_cross_entropy target " + std::to_string(t) + " outside [0," + std::to_string(m) + ")");
    // fused log-sum-exp keeps the loss finite for large logits
    Tensor probs({n, m});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = a.at(i, 0);
        for (int j = 1; j < m; ++j) mx = std::max(mx, a.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = std::exp(a.at(i, j) - mx);
            probs.at(i, j) = e;
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < m; ++j) probs.at(i, j) *= inv;
        total += mx + std::log(denom) - a.at(i, targets[size_t(i)]);
    }
    if (reduction == Reduction::Mean) total /= double(n);
    return newNode(Tensor::scalar(total), {ai},
        [ai, n, m, reduction, targets = std::move(targets), probs = std::move(probs)](Graph& g, int self) {
            Node& an = g.node(ai);
            if (!an.needsGrad) return;
            const double gscale = g.node(self).grad.data[0] * (reduction == Reduction::Mean ? 1.0 / double(n) : 1.0);
            for (int i = 0; i < n; ++i) {
                const int t = targets[size_t(i)];
                for (int j = 0; j < m; ++j) {
                    double d = probs.at(i, j);
                    if (j == t) d -= 1.0;
                    an.grad.at(i, j) += gscale * d;
                }
            }
        });
}

Value Graph::l2_normalize_rows(Value av)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    requireRank2(a, "l2_normalize_rows");
    const int n = a.rows(), m = a.cols();
    constexpr double kEps = 1e-12;
    Tensor out({n, m});
    std::vector<double> norms(size_t(n), 0.0);
    std::vector<char> passthrough(size_t(n), 0);
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < m; ++j) sq += a.at(i, j) * a.at(i, j);
        const double nm = std::sqrt(sq);
        norms[size_t(i)] = nm;
        if (nm <= kEps) {
            passthrough[size_t(i)] = 1;
            for (int j = 0; j < m; ++j) out.at(i, j) = a.at(i, j);
        } else {
            const double inv = 1.0 / nm;
            for (int j = 0; j < m; ++j) out.at(i, j) = a.at(i, j) * inv;
        }
    }
    return newNode(std::move(out), {ai},
        [ai, n, m, norms = std::move(norms), passthrough = std::move(passthrough)](Graph& g, int self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& y = g.node(self).value;
            Node& an = g.node(ai);
            if (!an.needsGrad) return;
            for (int i = 0; i < n; ++i) {
                if (passthrough[size_t(i)]) {
                    for (int j = 0; j < m; ++j) an.grad.at(i, j) += go.at(i, j);
                    continue;
                }
                double dot = 0.0;
                for (int j = 0; j < m; ++j) dot += go.at(i, j) * y.at(i, j);
                const double inv = 1.0 / norms[size_t(i)];
                for (int j = 0; j < m; ++j)
                    an.grad.at(i, j) += (go.at(i, j) - y.at(i, j) * dot) * inv;
            }
        });
}

Value Graph::cosine_rows(Value av, Value bv)
{
    int ai = check(av), bi = check(bv);
    const Tensor& a = node(ai).value;
    const Tensor& b = node(bi).value;
    requireRank2(a, "cosine_rows");
    requireRank2(b, "cosine_rows");
    if (!same_shape(a, b))
        raise(ErrorKind::ShapeMismatch, "cosine_rows shapes differ: " + shape_str(a) + " vs " + shape_str(b));
    const int n = a.rows(), m = a.cols();
    constexpr double kEps = 1e-12;
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int j = 0; j < m; ++j) {
            dot += a.at(i, j) * b.at(i, j);
            na += a.at(i, j) * a.at(i, j);
            nb += b.at(i, j) * b.at(i, j);
        }
        const double den = std::sqrt(na) * std::sqrt(nb);
        out.data[size_t(i)] = den <= kEps ? 0.0 : dot / den;
    }
    return newNode(std::move(out), {ai, bi}, [ai, bi, n, m](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        const Tensor& cs = g.node(self).value;
        Node& an = g.node(ai);
        Node& bn = g.node(bi);
        const Tensor& a = an.value;
        const Tensor& b = bn.value;
        constexpr double kEps = 1e-12;
        for (int i = 0; i < n; ++i) {
            double na2 = 0.0, nb2 = 0.0;
            for (int j = 0; j < m; ++j) {
                na2 += a.at(i, j) * a.at(i, j);
                nb2 += b.at(i, j) * b.at(i, j);
            }
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            if (na * nb <= kEps) continue; // degenerate rows carry no gradient
            const double gi = go.data[size_t(i)];
            const double c = cs.data[size_t(i)];
            const double invAB = 1.0 / (na * nb);
            if (an.needsGrad)
                for (int j = 0; j < m; ++j)
                    an.grad.at(i, j) += gi * (b.at(i, j) * invAB - c * a.at(i, j) / na2);
            if (bn.needsGrad)
                for (int j = 0; j < m; ++j)
                    bn.grad.at(i, j) += gi * (a.at(i, j) * invAB - c * b.at(i, j) / nb2);
        }
    });
}

Value Graph::mean(Value av)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    if (a.numel() < 1) raise(ErrorKind::ShapeMismatch, "mean of an empty tensor");
    double acc = 0.0;
    for (double v : a.data) acc += v;
    const double inv = 1.0 / double(a.numel());
    return newNode(Tensor::scalar(acc * inv), {ai}, [ai, inv](Graph& g, int self) {
        Node& an = g.node(ai);
        if (!an.needsGrad) return;
        const double gs = g.node(self).grad.data[0] * inv;
        for (double& d : an.grad.data) d += gs;
    });
}

Value Graph::sum(Value av)
{
    int ai = check(av);
    const Tensor& a = node(ai).value;
    double acc = 0.0;
    for (double v : a.data) acc += v;
    return newNode(Tensor::scalar(acc), {ai}, [ai](Graph& g, int self) {
        Node& an = g.node(ai);
        if (!an.needsGrad) return;
        const double gs = g.node(self).grad.data[0];
        for (double& d : an.grad.data) d += gs;
    });
}

Value Graph::custom(std::shared_ptr<CustomOp> op, std::vector<Value> inputs)
{
    std::vector<int> parents;
    parents.reserve(inputs.size());
    for (Value v : inputs) parents.push_back(check(v));
    std::vector<const Tensor*> ins;
    ins.reserve(parents.size());
    for (int p : parents) ins.push_back(&node(p).value);
    Tensor out = op->forward(ins);
    return newNode(std::move(out), parents,
        [op = std::move(op), parents](Graph& g, int self) {
            std::vector<const Tensor*> ins;
            std::vector<Tensor*> grads;
            ins.reserve(parents.size());
            grads.reserve(parents.size());
            for (int p : parents) {
                Node& pn = g.node(p);
                ins.push_back(&pn.value);
                grads.push_back(pn.needsGrad ? &pn.grad : nullptr);
            }
            op->backward(g.node(self).grad, ins, g.node(self).value, grads);
        });
}

void Graph::backward(Value loss)
{
    if (mConsumed)
        raise(ErrorKind::GraphConsumed, "graph already differentiated");
    const int id = check(loss);
    Node& top = node(id);
    if (!top.value.shape.empty())
        raise(ErrorKind::NonScalarLoss, "backward requires a rank-0 loss, got " + shape_str(top.value));
    mConsumed = true;
    mBackwardDone = true;
    if (!top.needsGrad) return;
    top.grad.data[0] = 1.0;
    for (int i = id; i >= 0; --i) {
        Node& nd = node(i);
        if (nd.needsGrad && nd.back) nd.back(*this, i);
    }
}

} // namespace splatseg::ad
