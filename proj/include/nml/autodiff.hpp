#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nml/tensor.hpp"

namespace nml::ad {

// Eager reverse-mode tape. Every primitive computes its value at creation
// time; backward() creates adjoints as new tape nodes, so gradients are
// themselves differentiable expressions. Hessian-vector products fall out of
// running backward twice (differentiate <g, v>), which keeps them exact
// rather than finite-difference approximations.
//
// Nodes are append-only and inputs always precede outputs, so one reverse
// index sweep is a valid reverse topological order.

enum class Op {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Transpose,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Scale,      // c * x
    AddScalar,  // x + c
    SumRows,    // NxF -> 1xF
    SumCols,    // NxF -> Nx1
    SumAll,     // NxF -> 1x1
    BcastRows,  // 1xF -> NxF
    BcastCols,  // Nx1 -> NxF
    Fill,       // 1x1 -> NxF (constant fill with the scalar)
    ReluMask,   // 1 where x > 0 else 0; treated as constant under differentiation
    RowMax,     // NxF -> Nx1 row maxima; treated as constant under differentiation
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;        // scalar attribute for Scale / AddScalar
    std::size_t dim0 = 0;  // target rows for broadcast / fill ops
    std::size_t dim1 = 0;  // target cols for fill
    Tensor value;
};

class Tape {
  public:
    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor t) { return push({Op::Const, -1, -1, 0.0, 0, 0, std::move(t)}); }
    Var constant(double v) { return constant(scalar_tensor(v)); }

    Var leaf(Tensor t) { return push({Op::Leaf, -1, -1, 0.0, 0, 0, std::move(t)}); }

    Var add(Var x, Var y) {
        const Tensor &a = value(x), &b = value(y);
        require(a.same_shape(b), "add: shape mismatch");
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] + b.data[i];
        return push({Op::Add, x.id, y.id, 0.0, 0, 0, std::move(out)});
    }

    Var sub(Var x, Var y) {
        const Tensor &a = value(x), &b = value(y);
        require(a.same_shape(b), "sub: shape mismatch");
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] - b.data[i];
        return push({Op::Sub, x.id, y.id, 0.0, 0, 0, std::move(out)});
    }

    Var mul(Var x, Var y) {
        const Tensor &a = value(x), &b = value(y);
        require(a.same_shape(b), "mul: shape mismatch");
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] * b.data[i];
        return push({Op::Mul, x.id, y.id, 0.0, 0, 0, std::move(out)});
    }

    Var div(Var x, Var y) {
        const Tensor &a = value(x), &b = value(y);
        require(a.same_shape(b), "div: shape mismatch");
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] / b.data[i];
        return push({Op::Div, x.id, y.id, 0.0, 0, 0, std::move(out)});
    }

    Var matmul(Var x, Var y) {
        const Tensor &a = value(x), &b = value(y);
        require(a.cols == b.rows, "matmul: inner dimensions differ");
        Tensor out(a.rows, b.cols, 0.0);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t k = 0; k < a.cols; ++k) {
                const double aik = a.at(i, k);
                for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
            }
        return push({Op::MatMul, x.id, y.id, 0.0, 0, 0, std::move(out)});
    }

    Var transpose(Var x) {
        const Tensor& a = value(x);
        Tensor out(a.cols, a.rows);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
        return push({Op::Transpose, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    Var exp_(Var x) { return unary(Op::Exp, x, [](double v) { return std::exp(v); }); }
    Var log_(Var x) { return unary(Op::Log, x, [](double v) { return std::log(v); }); }
    Var sqrt_(Var x) { return unary(Op::Sqrt, x, [](double v) { return std::sqrt(v); }); }
    Var tanh_(Var x) { return unary(Op::Tanh, x, [](double v) { return std::tanh(v); }); }

    Var scale(Var x, double c) {
        const Tensor& a = value(x);
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = c * a.data[i];
        return push({Op::Scale, x.id, -1, c, 0, 0, std::move(out)});
    }

    Var add_scalar(Var x, double c) {
        const Tensor& a = value(x);
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] + c;
        return push({Op::AddScalar, x.id, -1, c, 0, 0, std::move(out)});
    }

    Var sum_rows(Var x) {
        const Tensor& a = value(x);
        Tensor out(1, a.cols, 0.0);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) out.data[j] += a.at(i, j);
        return push({Op::SumRows, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    Var sum_cols(Var x) {
        const Tensor& a = value(x);
        Tensor out(a.rows, 1, 0.0);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) out.data[i] += a.at(i, j);
        return push({Op::SumCols, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    Var sum_all(Var x) {
        const Tensor& a = value(x);
        double s = 0.0;
        for (double v : a.data) s += v;
        return push({Op::SumAll, x.id, -1, 0.0, a.rows, a.cols, scalar_tensor(s)});
    }

    Var broadcast_rows(Var x, std::size_t n) {
        const Tensor& a = value(x);
        require(a.rows == 1, "broadcast_rows: input must be 1xF");
        Tensor out(n, a.cols);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) out.at(i, j) = a.data[j];
        return push({Op::BcastRows, x.id, -1, 0.0, n, 0, std::move(out)});
    }

    Var broadcast_cols(Var x, std::size_t f) {
        const Tensor& a = value(x);
        require(a.cols == 1, "broadcast_cols: input must be Nx1");
        Tensor out(a.rows, f);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < f; ++j) out.at(i, j) = a.data[i];
        return push({Op::BcastCols, x.id, -1, 0.0, f, 0, std::move(out)});
    }

    Var fill(Var x, std::size_t r, std::size_t c) {
        const Tensor& a = value(x);
        require(a.size() == 1, "fill: input must be scalar");
        return push({Op::Fill, x.id, -1, 0.0, r, c, Tensor(r, c, a.data[0])});
    }

    Var relu_mask(Var x) {
        const Tensor& a = value(x);
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.data[i] > 0.0 ? 1.0 : 0.0;
        return push({Op::ReluMask, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    Var row_max(Var x) {
        const Tensor& a = value(x);
        Tensor out(a.rows, 1);
        for (std::size_t i = 0; i < a.rows; ++i) {
            double m = a.at(i, 0);
            for (std::size_t j = 1; j < a.cols; ++j) m = std::max(m, a.at(i, j));
            out.data[i] = m;
        }
        return push({Op::RowMax, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    // Convenience compounds.
    Var neg(Var x) { return scale(x, -1.0); }

    Var relu(Var x) { return mul(x, relu_mask(x)); }

    Var leaky_relu(Var x, double slope) {
        // x * (slope + (1-slope) * mask); the mask is 0 at x == 0 so the
        // subgradient there is the leaky slope times zero input, matching relu.
        Var coeff = add_scalar(scale(relu_mask(x), 1.0 - slope), slope);
        return mul(x, coeff);
    }

    Var mean_rows(Var x) { return scale(sum_rows(x), 1.0 / static_cast<double>(value(x).rows)); }

    Var dot_all(Var x, Var y) { return sum_all(mul(x, y)); }

    // Adjoints of `loss` (a 1x1 node) with respect to each of `wrt`, created
    // as new nodes on this tape. Missing adjoints come back as invalid Vars
    // (identically-zero gradient).
    std::vector<Var> grad(Var loss, std::span<const Var> wrt) {
        require(value(loss).size() == 1, "grad: loss must be scalar");
        std::vector<int> adj(nodes_.size(), -1);
        adj[static_cast<std::size_t>(loss.id)] = constant(1.0).id;
        for (int i = loss.id; i >= 0; --i) {
            const int gi = adj[static_cast<std::size_t>(i)];
            if (gi < 0) continue;
            pull_back(i, Var{gi}, adj);
        }
        std::vector<Var> out;
        out.reserve(wrt.size());
        for (Var w : wrt) out.push_back(Var{adj[static_cast<std::size_t>(w.id)]});
        return out;
    }

  private:
    std::vector<Node> nodes_;

    static void require(bool ok, const char* what) {
        if (!ok) throw ShapeError(what);
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <class F>
    Var unary(Op op, Var x, F f) {
        const Tensor& a = value(x);
        Tensor out(a.rows, a.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(a.data[i]);
        return push({op, x.id, -1, 0.0, 0, 0, std::move(out)});
    }

    void accumulate(std::vector<int>& adj, int target, Var contrib) {
        int& slot = adj[static_cast<std::size_t>(target)];
        slot = slot < 0 ? contrib.id : add(Var{slot}, contrib).id;
    }

    void pull_back(int i, Var dy, std::vector<int>& adj) {
        // Copy: the nodes_ vector reallocates while new adjoint nodes are pushed.
        const Node n = nodes_[static_cast<std::size_t>(i)];
        const Var self{i};
        const Var a{n.a}, b{n.b};
        switch (n.op) {
            case Op::Const:
            case Op::Leaf:
            case Op::ReluMask:
            case Op::RowMax:
                break;
            case Op::Add:
                accumulate(adj, n.a, dy);
                accumulate(adj, n.b, dy);
                break;
            case Op::Sub:
                accumulate(adj, n.a, dy);
                accumulate(adj, n.b, neg(dy));
                break;
            case Op::Mul:
                accumulate(adj, n.a, mul(dy, b));
                accumulate(adj, n.b, mul(dy, a));
                break;
            case Op::Div:
                accumulate(adj, n.a, div(dy, b));
                accumulate(adj, n.b, neg(mul(dy, div(self, b))));
                break;
            case Op::MatMul:
                accumulate(adj, n.a, matmul(dy, transpose(b)));
                accumulate(adj, n.b, matmul(transpose(a), dy));
                break;
            case Op::Transpose:
                accumulate(adj, n.a, transpose(dy));
                break;
            case Op::Exp:
                accumulate(adj, n.a, mul(dy, self));
                break;
            case Op::Log:
                accumulate(adj, n.a, div(dy, a));
                break;
            case Op::Sqrt:
                accumulate(adj, n.a, scale(div(dy, self), 0.5));
                break;
            case Op::Tanh:
                accumulate(adj, n.a, mul(dy, add_scalar(neg(mul(self, self)), 1.0)));
                break;
            case Op::Scale:
                accumulate(adj, n.a, scale(dy, n.c));
                break;
            case Op::AddScalar:
                accumulate(adj, n.a, dy);
                break;
            case Op::SumRows:
                accumulate(adj, n.a, broadcast_rows(dy, value(a).rows));
                break;
            case Op::SumCols:
                accumulate(adj, n.a, broadcast_cols(dy, value(a).cols));
                break;
            case Op::SumAll:
                accumulate(adj, n.a, fill(dy, n.dim0, n.dim1));
                break;
            case Op::BcastRows:
                accumulate(adj, n.a, sum_rows(dy));
                break;
            case Op::BcastCols:
                accumulate(adj, n.a, sum_cols(dy));
                break;
            case Op::Fill:
                accumulate(adj, n.a, sum_all(dy));
                break;
        }
    }
};

// A parameter store layout: named blocks laid out contiguously in one flat
// vector, the coordinate system for generators, conserved quantities and
// optimizer state throughout the library.
struct ParamBlock {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return rows * cols; }
};

struct ParamLayout {
    std::vector<ParamBlock> blocks;

    std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
        ParamBlock b{std::move(name), rows, cols, dim()};
        blocks.push_back(std::move(b));
        return blocks.size() - 1;
    }

    std::size_t dim() const {
        return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size();
    }

    Tensor slice(const std::vector<double>& flat, std::size_t block) const {
        const ParamBlock& b = blocks[block];
        Tensor t(b.rows, b.cols);
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()), t.data.begin());
        return t;
    }
};

// A differentiable scalar objective over a flat parameter vector. The build
// callback receives one leaf Var per parameter block (data already bound).
struct Objective {
    ParamLayout layout;
    std::function<Var(Tape&, const std::vector<Var>&)> build;
};

namespace detail {
inline std::vector<Var> make_leaves(Tape& tape, const Objective& obj, const std::vector<double>& theta) {
    if (theta.size() != obj.layout.dim()) throw ShapeError("objective: parameter vector has wrong length");
    std::vector<Var> leaves;
    leaves.reserve(obj.layout.blocks.size());
    for (std::size_t k = 0; k < obj.layout.blocks.size(); ++k) leaves.push_back(tape.leaf(obj.layout.slice(theta, k)));
    return leaves;
}

inline void gather(const Tape& tape, const ParamLayout& layout, std::span<const Var> vars, std::vector<double>& out) {
    out.assign(layout.dim(), 0.0);
    for (std::size_t k = 0; k < layout.blocks.size(); ++k) {
        if (!vars[k].valid()) continue;
        const Tensor& g = tape.value(vars[k]);
        std::copy(g.data.begin(), g.data.end(), out.begin() + static_cast<std::ptrdiff_t>(layout.blocks[k].offset));
    }
}
}  // namespace detail

inline double value(const Objective& obj, const std::vector<double>& theta) {
    Tape tape;
    auto leaves = detail::make_leaves(tape, obj, theta);
    Var loss = obj.build(tape, leaves);
    const double l = tape.value(loss).data[0];
    if (!std::isfinite(l)) throw NumericError("objective value is not finite");
    return l;
}

inline std::pair<double, std::vector<double>> value_grad(const Objective& obj, const std::vector<double>& theta) {
    Tape tape;
    auto leaves = detail::make_leaves(tape, obj, theta);
    Var loss = obj.build(tape, leaves);
    const double l = tape.value(loss).data[0];
    if (!std::isfinite(l)) throw NumericError("objective value is not finite");
    auto gvars = tape.grad(loss, leaves);
    std::vector<double> g;
    detail::gather(tape, obj.layout, gvars, g);
    for (double v : g)
        if (!std::isfinite(v)) throw NumericError("gradient is not finite");
    return {l, std::move(g)};
}

inline std::vector<double> gradient(const Objective& obj, const std::vector<double>& theta) {
    return value_grad(obj, theta).second;
}

// Hessian-vector product by a second reverse sweep through the adjoint graph
// of <g, v>.
inline std::vector<double> hvp(const Objective& obj, const std::vector<double>& theta, const std::vector<double>& v) {
    if (v.size() != obj.layout.dim()) throw ShapeError("hvp: direction has wrong length");
    Tape tape;
    auto leaves = detail::make_leaves(tape, obj, theta);
    Var loss = obj.build(tape, leaves);
    auto gvars = tape.grad(loss, leaves);
    Var s{-1};
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (!gvars[k].valid()) continue;
        Var term = tape.dot_all(gvars[k], tape.constant(obj.layout.slice(v, k)));
        s = s.valid() ? tape.add(s, term) : term;
    }
    std::vector<double> out(obj.layout.dim(), 0.0);
    if (!s.valid()) return out;
    auto hvars = tape.grad(s, leaves);
    detail::gather(tape, obj.layout, hvars, out);
    for (double x : out)
        if (!std::isfinite(x)) throw NumericError("hvp is not finite");
    return out;
}

}  // namespace nml::ad
