#include "fznet/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fznet {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
    throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

int Tape::push(Shape shape, std::vector<double> values, std::function<void(Tape&)> bwd) {
    Node n;
    n.shape = std::move(shape);
    n.values = std::move(values);
    n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node) {
    auto& g = nodes_[static_cast<std::size_t>(node)].grad;
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].values.size(), 0.0);
    return g;
}

bool Tape::needs(int node) const { return needs_[static_cast<std::size_t>(node)]; }

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("leaf: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    Shape s = shape;
    int id = push(std::move(shape), std::move(values), nullptr);
    needs_.push_back(requires_grad);
    return Tensor{id, std::move(s)};
}

Tensor Tape::make(Shape shape, std::vector<double> values, std::function<void(Tape&)> bwd,
                  std::initializer_list<int> inputs) {
    bool need = false;
    for (int in : inputs) need = need || needs_[static_cast<std::size_t>(in)];
    Shape s = shape;
    int id = push(std::move(shape), std::move(values), need ? std::move(bwd) : nullptr);
    needs_.push_back(need);
    return Tensor{id, std::move(s)};
}

Tensor Tape::matmul(Tensor a, Tensor b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape, b.shape);
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    {
        CMatMap A(vals(a.node).data(), m, k);
        CMatMap B(vals(b.node).data(), k, n);
        MatMap C(out.data(), m, n);
        C.noalias() = A * B;
    }
    const int ai = a.node, bi = b.node;
    Tensor outT = make({m, n}, std::move(out), nullptr, {ai, bi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai, bi, m, k, n](Tape& t) {
            CMatMap G(t.nodes_[static_cast<std::size_t>(self)].grad.data(), m, n);
            if (t.needs(ai)) {
                CMatMap B(t.vals(bi).data(), k, n);
                MatMap dA(t.grad_buf(ai).data(), m, k);
                dA.noalias() += G * B.transpose();
            }
            if (t.needs(bi)) {
                CMatMap A(t.vals(ai).data(), m, k);
                MatMap dB(t.grad_buf(bi).data(), k, n);
                dB.noalias() += A.transpose() * G;
            }
        };
    }
    return outT;
}

Tensor Tape::matvec(Tensor w, Tensor x) {
    if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) shape_fail("matvec", w.shape, x.shape);
    const int m = w.dim(0), k = w.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m));
    {
        CMatMap W(vals(w.node).data(), m, k);
        CVecMap X(vals(x.node).data(), k);
        VecMap Y(out.data(), m);
        Y.noalias() = W * X;
    }
    const int wi = w.node, xi = x.node;
    Tensor outT = make({m}, std::move(out), nullptr, {wi, xi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, wi, xi, m, k](Tape& t) {
            CVecMap G(t.nodes_[static_cast<std::size_t>(self)].grad.data(), m);
            if (t.needs(wi)) {
                CVecMap X(t.vals(xi).data(), k);
                MatMap dW(t.grad_buf(wi).data(), m, k);
                dW.noalias() += G * X.transpose();
            }
            if (t.needs(xi)) {
                CMatMap W(t.vals(wi).data(), m, k);
                VecMap dX(t.grad_buf(xi).data(), k);
                dX.noalias() += W.transpose() * G;
            }
        };
    }
    return outT;
}

// kind: 0 add, 1 sub, 2 mul
Tensor Tape::ewise_binary(Tensor a, Tensor b, int kind) {
    static const char* names[] = {"add", "sub", "mul"};
    const bool same = a.shape == b.shape;
    // broadcast: b is a vector matching the last axis of a
    const bool bcast = !same && b.rank() == 1 && a.rank() >= 1 && a.shape.back() == b.dim(0);
    if (!same && !bcast) shape_fail(names[kind], a.shape, b.shape);

    const auto& av = vals(a.node);
    const auto& bv = vals(b.node);
    const std::size_t n = av.size();
    const std::size_t d = bv.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double bi = same ? bv[i] : bv[i % d];
        switch (kind) {
            case 0: out[i] = av[i] + bi; break;
            case 1: out[i] = av[i] - bi; break;
            default: out[i] = av[i] * bi; break;
        }
    }
    const int ai = a.node, bn = b.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai, bn});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai, bn, kind, same, n, d](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            if (t.needs(ai)) {
                auto& da = t.grad_buf(ai);
                if (kind == 2) {
                    const auto& bv2 = t.vals(bn);
                    for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * (same ? bv2[i] : bv2[i % d]);
                } else {
                    for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
                }
            }
            if (t.needs(bn)) {
                auto& db = t.grad_buf(bn);
                const auto& av2 = t.vals(ai);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = same ? i : i % d;
                    switch (kind) {
                        case 0: db[j] += g[i]; break;
                        case 1: db[j] -= g[i]; break;
                        default: db[j] += g[i] * av2[i]; break;
                    }
                }
            }
        };
    }
    return outT;
}

Tensor Tape::add(Tensor a, Tensor b) { return ewise_binary(a, b, 0); }
Tensor Tape::sub(Tensor a, Tensor b) { return ewise_binary(a, b, 1); }
Tensor Tape::mul(Tensor a, Tensor b) { return ewise_binary(a, b, 2); }

Tensor Tape::scale(Tensor a, double c) {
    const auto& av = vals(a.node);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    const int ai = a.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai, c](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            auto& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
        };
    }
    return outT;
}

Tensor Tape::tanh(Tensor a) {
    const auto& av = vals(a.node);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    const int ai = a.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            const auto& y = t.vals(self);
            auto& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
        };
    }
    return outT;
}

Tensor Tape::sigmoid(Tensor a) {
    const auto& av = vals(a.node);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double x = av[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    const int ai = a.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            const auto& y = t.vals(self);
            auto& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
        };
    }
    return outT;
}

Tensor Tape::relu(Tensor a) {
    const auto& av = vals(a.node);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    const int ai = a.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            const auto& x = t.vals(ai);
            auto& da = t.grad_buf(ai);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > 0.0) da[i] += g[i];
        };
    }
    return outT;
}

Tensor Tape::softmax(Tensor x) {
    if (x.numel() == 0) throw DomainError("softmax: empty input");
    const auto& xv = vals(x.node);
    const double mx = *std::max_element(xv.begin(), xv.end());
    std::vector<double> out(xv.size());
    double z = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::exp(xv[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    const int xi = x.node;
    Tensor outT = make(x.shape, std::move(out), nullptr, {xi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, xi](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            const auto& y = t.vals(self);
            auto& dx = t.grad_buf(xi);
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += y[i] * (g[i] - dot);
        };
    }
    return outT;
}

Tensor Tape::concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DomainError("concat: no parts");
    const int rank = parts[0].rank();
    if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis " + std::to_string(axis));
    Shape out_shape = parts[0].shape;
    for (std::size_t p = 1; p < parts.size(); ++p) {
        if (parts[p].rank() != rank) shape_fail("concat", parts[0].shape, parts[p].shape);
        for (int i = 0; i < rank; ++i)
            if (i != axis && parts[p].dim(i) != parts[0].dim(i))
                shape_fail("concat", parts[0].shape, parts[p].shape);
        out_shape[static_cast<std::size_t>(axis)] += parts[p].dim(axis);
    }

    // Treat the tensor as (outer, axis_len, inner) and copy axis blocks.
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(parts[0].dim(i));
    for (int i = axis + 1; i < rank; ++i) inner *= static_cast<std::size_t>(parts[0].dim(i));
    const std::size_t out_axis = static_cast<std::size_t>(out_shape[static_cast<std::size_t>(axis)]);

    std::vector<double> out(shape_numel(out_shape));
    std::vector<int> ids(parts.size());
    std::vector<std::size_t> axis_lens(parts.size());
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        ids[p] = parts[p].node;
        const std::size_t alen = static_cast<std::size_t>(parts[p].dim(axis));
        axis_lens[p] = alen;
        const auto& pv = vals(parts[p].node);
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(pv.begin() + static_cast<std::ptrdiff_t>(o * alen * inner),
                      pv.begin() + static_cast<std::ptrdiff_t>((o + 1) * alen * inner),
                      out.begin() + static_cast<std::ptrdiff_t>((o * out_axis + off) * inner));
        off += alen;
    }

    bool need = false;
    for (int id : ids) need = need || needs_[static_cast<std::size_t>(id)];
    Shape s = out_shape;
    int self = push(std::move(out_shape), std::move(out), nullptr);
    needs_.push_back(need);
    if (need) {
        nodes_[static_cast<std::size_t>(self)].backward =
            [self, ids, axis_lens, outer, inner, out_axis](Tape& t) {
                const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
                std::size_t off2 = 0;
                for (std::size_t p = 0; p < ids.size(); ++p) {
                    const std::size_t alen = axis_lens[p];
                    if (t.needs(ids[p])) {
                        auto& dp = t.grad_buf(ids[p]);
                        for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < alen * inner; ++i)
                                dp[o * alen * inner + i] += g[(o * out_axis + off2) * inner + i];
                    }
                    off2 += alen;
                }
            };
    }
    return Tensor{self, std::move(s)};
}

Tensor Tape::max_over_time(Tensor h) {
    if (h.rank() != 2) throw ShapeError("max_over_time: expected rank 2, got " + shape_str(h.shape));
    const int T = h.dim(0), d = h.dim(1);
    if (T < 1) throw DomainError("max_over_time: empty sequence");
    const auto& hv = vals(h.node);
    std::vector<double> out(static_cast<std::size_t>(d));
    std::vector<int> arg(static_cast<std::size_t>(d), 0);
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = hv[static_cast<std::size_t>(j)];
    for (int t = 1; t < T; ++t)
        for (int j = 0; j < d; ++j) {
            const double v = hv[static_cast<std::size_t>(t) * d + j];
            if (v > out[static_cast<std::size_t>(j)]) {  // strict: ties keep first occurrence
                out[static_cast<std::size_t>(j)] = v;
                arg[static_cast<std::size_t>(j)] = t;
            }
        }
    const int hi = h.node;
    Tensor outT = make({d}, std::move(out), nullptr, {hi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, hi, arg, d](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            auto& dh = t.grad_buf(hi);
            for (int j = 0; j < d; ++j)
                dh[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * d + j] +=
                    g[static_cast<std::size_t>(j)];
        };
    }
    return outT;
}

Tensor Tape::row(Tensor h, int t) {
    if (h.rank() != 2) throw ShapeError("row: expected rank 2, got " + shape_str(h.shape));
    const int T = h.dim(0), d = h.dim(1);
    if (t < 0 || t >= T) throw DomainError("row: index " + std::to_string(t) + " out of range");
    const auto& hv = vals(h.node);
    std::vector<double> out(hv.begin() + static_cast<std::ptrdiff_t>(t) * d,
                            hv.begin() + static_cast<std::ptrdiff_t>(t + 1) * d);
    const int hi = h.node;
    Tensor outT = make({d}, std::move(out), nullptr, {hi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, hi, t, d](Tape& tp) {
            const auto& g = tp.nodes_[static_cast<std::size_t>(self)].grad;
            auto& dh = tp.grad_buf(hi);
            for (int j = 0; j < d; ++j) dh[static_cast<std::size_t>(t) * d + j] += g[static_cast<std::size_t>(j)];
        };
    }
    return outT;
}

Tensor Tape::slice(Tensor x, int begin, int len) {
    if (x.rank() != 1) throw ShapeError("slice: expected rank 1, got " + shape_str(x.shape));
    if (begin < 0 || len < 1 || begin + len > x.dim(0))
        throw DomainError("slice: range [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                          ") out of bounds for " + shape_str(x.shape));
    const auto& xv = vals(x.node);
    std::vector<double> out(xv.begin() + begin, xv.begin() + begin + len);
    const int xi = x.node;
    Tensor outT = make({len}, std::move(out), nullptr, {xi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, xi, begin, len](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            auto& dx = t.grad_buf(xi);
            for (int i = 0; i < len; ++i) dx[static_cast<std::size_t>(begin + i)] += g[static_cast<std::size_t>(i)];
        };
    }
    return outT;
}

Tensor Tape::stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw DomainError("stack_rows: empty");
    const int d = rows[0].dim(0);
    for (const auto& r : rows)
        if (r.rank() != 1 || r.dim(0) != d) shape_fail("stack_rows", rows[0].shape, r.shape);
    const int T = static_cast<int>(rows.size());
    std::vector<double> out(static_cast<std::size_t>(T) * d);
    std::vector<int> ids(rows.size());
    for (int t = 0; t < T; ++t) {
        ids[static_cast<std::size_t>(t)] = rows[static_cast<std::size_t>(t)].node;
        const auto& rv = vals(rows[static_cast<std::size_t>(t)].node);
        std::copy(rv.begin(), rv.end(), out.begin() + static_cast<std::ptrdiff_t>(t) * d);
    }
    bool need = false;
    for (int id : ids) need = need || needs_[static_cast<std::size_t>(id)];
    int self = push({T, d}, std::move(out), nullptr);
    needs_.push_back(need);
    if (need) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ids, d](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            for (std::size_t r = 0; r < ids.size(); ++r) {
                if (!t.needs(ids[r])) continue;
                auto& dr = t.grad_buf(ids[r]);
                for (int j = 0; j < d; ++j) dr[static_cast<std::size_t>(j)] += g[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
            }
        };
    }
    return Tensor{self, {T, d}};
}

Tensor Tape::reshape(Tensor x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape) + " -> " + shape_str(shape) + " changes element count");
    const int xi = x.node;
    Tensor outT = make(shape, vals(xi), nullptr, {xi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, xi](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            auto& dx = t.grad_buf(xi);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        };
    }
    return outT;
}

Tensor Tape::div_scalar(Tensor a, Tensor s) {
    if (s.numel() != 1) throw ShapeError("div_scalar: divisor must be scalar, got " + shape_str(s.shape));
    const double sv = vals(s.node)[0];
    const auto& av = vals(a.node);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / sv;
    const int ai = a.node, si = s.node;
    Tensor outT = make(a.shape, std::move(out), nullptr, {ai, si});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, ai, si](Tape& t) {
            const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
            const double sv2 = t.vals(si)[0];
            if (t.needs(ai)) {
                auto& da = t.grad_buf(ai);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / sv2;
            }
            if (t.needs(si)) {
                const auto& av2 = t.vals(ai);
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av2[i];
                t.grad_buf(si)[0] -= acc / (sv2 * sv2);
            }
        };
    }
    return outT;
}

Tensor Tape::sum(Tensor x) {
    const auto& xv = vals(x.node);
    double s = 0.0;
    for (double v : xv) s += v;
    const int xi = x.node;
    Tensor outT = make({1}, {s}, nullptr, {xi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, xi](Tape& t) {
            const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
            auto& dx = t.grad_buf(xi);
            for (auto& v : dx) v += g;
        };
    }
    return outT;
}

Tensor Tape::mse_loss(Tensor pred, const std::vector<double>& truth) {
    if (pred.numel() != truth.size() || truth.empty())
        throw ShapeError("mse_loss: prediction " + shape_str(pred.shape) + " vs " +
                         std::to_string(truth.size()) + " targets");
    const auto& pv = vals(pred.node);
    const std::size_t n = pv.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = pv[i] - truth[i];
        s += e * e;
    }
    const int pi = pred.node;
    Tensor outT = make({1}, {s / static_cast<double>(n)}, nullptr, {pi});
    const int self = outT.node;
    if (needs_[static_cast<std::size_t>(self)]) {
        nodes_[static_cast<std::size_t>(self)].backward = [self, pi, truth, n](Tape& t) {
            const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
            const auto& pv2 = t.vals(pi);
            auto& dp = t.grad_buf(pi);
            for (std::size_t i = 0; i < n; ++i)
                dp[i] += g * 2.0 * (pv2[i] - truth[i]) / static_cast<double>(n);
        };
    }
    return outT;
}

void Tape::backward(Tensor loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (needs_[i]) nodes_[i].grad.assign(nodes_[i].values.size(), 0.0);
    if (!needs_[static_cast<std::size_t>(loss.node)]) return;  // loss reaches no trainable leaf
    nodes_[static_cast<std::size_t>(loss.node)].grad[0] = 1.0;
    for (int i = loss.node; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backward && !n.grad.empty()) n.backward(*this);
    }
}

double grad_check(const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
                  std::vector<GradCheckParam> params, double eps) {
    auto run = [&](const std::vector<GradCheckParam>& ps, std::vector<std::vector<double>>* grads) {
        Tape tape;
        std::vector<Tensor> leaves;
        leaves.reserve(ps.size());
        for (const auto& p : ps) leaves.push_back(tape.leaf(p.shape, p.values, true));
        Tensor out = f(tape, leaves);
        if (out.numel() != 1) throw ShapeError("grad_check: function output must be scalar");
        const double y = tape.value0(out);
        if (!std::isfinite(y)) throw DomainError("grad_check: non-finite function output");
        if (grads) {
            tape.backward(out);
            grads->clear();
            for (const auto& l : leaves) grads->push_back(tape.grad(l));
        }
        return y;
    };

    std::vector<std::vector<double>> ad;
    run(params, &ad);

    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].values.size(); ++i) {
            const double orig = params[p].values[i];
            params[p].values[i] = orig + eps;
            const double fp = run(params, nullptr);
            params[p].values[i] = orig - eps;
            const double fm = run(params, nullptr);
            params[p].values[i] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double g = ad[p][i];
            const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace fznet
