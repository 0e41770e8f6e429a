#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "motionlab/mat.hpp"

namespace motionlab::ad {

using motionlab::Mat;

// Handle to a node in a Graph. Plain index, cheap to copy.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Define-by-run reverse-mode tape over Mat<S>.
//
// A Graph is built per forward pass and discarded afterwards. Ops append
// nodes; backward() walks the tape in reverse creation order. Parameter
// leaves carry an optional gradient sink that receives accumulated
// gradients when backward() finishes, so the same sink can collect grads
// across several per-sample graphs.
//
// With recording=false no closures are created and backward() is invalid;
// this is the inference mode used by sampling and frozen-module encoding.
template <typename S>
class Graph {
public:
    struct Node {
        Mat<S> value;
        Mat<S> grad;  // lazily allocated
        bool needs_grad = false;
        std::function<void(Graph&, Node&)> bw;  // may be empty (leaf / no-grad)
    };

    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    const Mat<S>& value(Var v) const { return nodes_[v.i].value; }
    Mat<S>& value_mut(Var v) { return nodes_[v.i].value; }
    const Mat<S>& grad(Var v) const { return nodes_[v.i].grad; }
    size_t node_count() const { return nodes_.size(); }

    // ---- leaves -------------------------------------------------------

    Var input(Mat<S> v) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = false;
        return push(std::move(n));
    }

    // Parameter leaf. If grad_sink is non-null the leaf participates in
    // backward and its accumulated gradient is added into *grad_sink.
    Var param(const Mat<S>& value, Mat<S>* grad_sink) {
        Node n;
        n.value = value;
        n.needs_grad = recording_ && grad_sink != nullptr;
        Var v = push(std::move(n));
        if (grad_sink != nullptr) sinks_.push_back({v.i, grad_sink});
        return v;
    }

    // ---- ops ----------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Mat<S>& A = val(a);
        const Mat<S>& B = val(b);
        assert(A.cols == B.rows);
        Mat<S> out(A.rows, B.cols);
        out.map().noalias() = A.map() * B.map();
        return unary_or_binary(std::move(out), a, b, [a, b](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map().noalias() += self.grad.map() * g.val(b).map().transpose();
            if (g.needs(b)) g.grad_ref(b).map().noalias() += g.val(a).map().transpose() * self.grad.map();
        });
    }

    // A * B^T
    Var matmul_nt(Var a, Var b) {
        const Mat<S>& A = val(a);
        const Mat<S>& B = val(b);
        assert(A.cols == B.cols);
        Mat<S> out(A.rows, B.rows);
        out.map().noalias() = A.map() * B.map().transpose();
        return unary_or_binary(std::move(out), a, b, [a, b](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map().noalias() += self.grad.map() * g.val(b).map();
            if (g.needs(b)) g.grad_ref(b).map().noalias() += self.grad.map().transpose() * g.val(a).map();
        });
    }

    Var add(Var a, Var b) {
        const Mat<S>& A = val(a);
        const Mat<S>& B = val(b);
        assert(A.same_shape(B));
        Mat<S> out = A;
        out.map() += B.map();
        return unary_or_binary(std::move(out), a, b, [a, b](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map();
            if (g.needs(b)) g.grad_ref(b).map() += self.grad.map();
        });
    }

    Var sub(Var a, Var b) {
        const Mat<S>& A = val(a);
        const Mat<S>& B = val(b);
        assert(A.same_shape(B));
        Mat<S> out = A;
        out.map() -= B.map();
        return unary_or_binary(std::move(out), a, b, [a, b](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map();
            if (g.needs(b)) g.grad_ref(b).map() -= self.grad.map();
        });
    }

    // Broadcast add of a [1, c] row vector over every row of a.
    Var add_rowvec(Var a, Var v) {
        const Mat<S>& A = val(a);
        const Mat<S>& V = val(v);
        assert(V.rows == 1 && V.cols == A.cols);
        Mat<S> out = A;
        out.map().rowwise() += V.map().row(0);
        return unary_or_binary(std::move(out), a, v, [a, v](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map();
            if (g.needs(v)) g.grad_ref(v).map().row(0) += self.grad.map().colwise().sum();
        });
    }

    Var add_const(Var a, const Mat<S>& c) {
        const Mat<S>& A = val(a);
        assert(A.same_shape(c));
        Mat<S> out = A;
        out.map() += c.map();
        return unary(std::move(out), a, [a](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map();
        });
    }

    Var scale(Var a, S s) {
        Mat<S> out = val(a);
        out.map() *= s;
        return unary(std::move(out), a, [a, s](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map() * s;
        });
    }

    // Multiply every element of a by a [1,1] scalar node.
    Var scale_by(Var a, Var s) {
        const Mat<S>& A = val(a);
        assert(val(s).rows == 1 && val(s).cols == 1);
        Mat<S> out = A;
        out.map() *= val(s)(0, 0);
        return unary_or_binary(std::move(out), a, s, [a, s](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map() += self.grad.map() * g.val(s)(0, 0);
            if (g.needs(s)) {
                const Mat<S>& X = g.val(a);
                S acc = 0;
                for (size_t i = 0; i < X.size(); ++i) acc += self.grad.at(i) * X.at(i);
                g.grad_ref(s)(0, 0) += acc;
            }
        });
    }

    Var hadamard(Var a, Var b) {
        const Mat<S>& A = val(a);
        const Mat<S>& B = val(b);
        assert(A.same_shape(B));
        Mat<S> out = A;
        out.map().array() *= B.map().array();
        return unary_or_binary(std::move(out), a, b, [a, b](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map().array() += self.grad.map().array() * g.val(b).map().array();
            if (g.needs(b)) g.grad_ref(b).map().array() += self.grad.map().array() * g.val(a).map().array();
        });
    }

    // Exact erf-based GELU; smooth, so finite differences agree tightly.
    Var gelu(Var a) {
        const Mat<S>& A = val(a);
        Mat<S> out(A.rows, A.cols);
        for (size_t i = 0; i < A.size(); ++i) {
            double x = static_cast<double>(A.at(i));
            out.at(i) = static_cast<S>(0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)));
        }
        return unary(std::move(out), a, [a](Graph& g, Node& self) {
            if (!g.needs(a)) return;
            const Mat<S>& X = g.val(a);
            Mat<S>& dx = g.grad_ref(a);
            for (size_t i = 0; i < X.size(); ++i) {
                double x = static_cast<double>(X.at(i));
                double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                dx.at(i) += self.grad.at(i) * static_cast<S>(cdf + x * pdf);
            }
        });
    }

    // Per-row layer norm with learnable gain/bias ([1, c] each).
    Var layer_norm(Var x, Var gamma, Var beta, S eps) {
        const Mat<S>& X = val(x);
        const Mat<S>& G = val(gamma);
        const Mat<S>& B = val(beta);
        assert(G.rows == 1 && G.cols == X.cols && B.rows == 1 && B.cols == X.cols);
        int R = X.rows, C = X.cols;
        Mat<S> xhat(R, C);
        Mat<S> inv_std(R, 1);
        for (int r = 0; r < R; ++r) {
            S mu = 0, var = 0;
            for (int c = 0; c < C; ++c) mu += X(r, c);
            mu /= static_cast<S>(C);
            for (int c = 0; c < C; ++c) {
                S d = X(r, c) - mu;
                var += d * d;
            }
            var /= static_cast<S>(C);
            S is = S(1) / std::sqrt(var + eps);
            inv_std(r, 0) = is;
            for (int c = 0; c < C; ++c) xhat(r, c) = (X(r, c) - mu) * is;
        }
        Mat<S> out(R, C);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) out(r, c) = xhat(r, c) * G(0, c) + B(0, c);

        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && (needs(x) || needs(gamma) || needs(beta));
        if (n.needs_grad) {
            n.bw = [x, gamma, beta, xh = std::move(xhat), is = std::move(inv_std)](Graph& g, Node& self) {
                const Mat<S>& Gm = g.val(gamma);
                int R = self.value.rows, C = self.value.cols;
                if (g.needs(gamma)) {
                    Mat<S>& dg = g.grad_ref(gamma);
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < C; ++c) dg(0, c) += self.grad(r, c) * xh(r, c);
                }
                if (g.needs(beta)) {
                    Mat<S>& db = g.grad_ref(beta);
                    for (int r = 0; r < R; ++r)
                        for (int c = 0; c < C; ++c) db(0, c) += self.grad(r, c);
                }
                if (g.needs(x)) {
                    Mat<S>& dx = g.grad_ref(x);
                    for (int r = 0; r < R; ++r) {
                        S m1 = 0, m2 = 0;
                        for (int c = 0; c < C; ++c) {
                            S dxh = self.grad(r, c) * Gm(0, c);
                            m1 += dxh;
                            m2 += dxh * xh(r, c);
                        }
                        m1 /= static_cast<S>(C);
                        m2 /= static_cast<S>(C);
                        for (int c = 0; c < C; ++c) {
                            S dxh = self.grad(r, c) * Gm(0, c);
                            dx(r, c) += is(r, 0) * (dxh - m1 - xh(r, c) * m2);
                        }
                    }
                }
            };
        }
        return push(std::move(n));
    }

    // Numerically stable per-row softmax.
    Var softmax_rows(Var a) {
        const Mat<S>& A = val(a);
        int R = A.rows, C = A.cols;
        Mat<S> out(R, C);
        for (int r = 0; r < R; ++r) {
            S mx = A(r, 0);
            for (int c = 1; c < C; ++c) mx = std::max(mx, A(r, c));
            S denom = 0;
            for (int c = 0; c < C; ++c) {
                S e = std::exp(A(r, c) - mx);
                out(r, c) = e;
                denom += e;
            }
            for (int c = 0; c < C; ++c) out(r, c) /= denom;
        }
        return unary(std::move(out), a, [a](Graph& g, Node& self) {
            if (!g.needs(a)) return;
            const Mat<S>& Y = self.value;
            Mat<S>& dx = g.grad_ref(a);
            int R = Y.rows, C = Y.cols;
            for (int r = 0; r < R; ++r) {
                S dot = 0;
                for (int c = 0; c < C; ++c) dot += self.grad(r, c) * Y(r, c);
                for (int c = 0; c < C; ++c) dx(r, c) += Y(r, c) * (self.grad(r, c) - dot);
            }
        });
    }

    Var slice_cols(Var a, int c0, int n) {
        const Mat<S>& A = val(a);
        assert(c0 >= 0 && c0 + n <= A.cols);
        Mat<S> out(A.rows, n);
        out.map() = A.map().middleCols(c0, n);
        return unary(std::move(out), a, [a, c0, n](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map().middleCols(c0, n) += self.grad.map();
        });
    }

    Var slice_rows(Var a, int r0, int n) {
        const Mat<S>& A = val(a);
        assert(r0 >= 0 && r0 + n <= A.rows);
        Mat<S> out(n, A.cols);
        out.map() = A.map().middleRows(r0, n);
        return unary(std::move(out), a, [a, r0, n](Graph& g, Node& self) {
            if (g.needs(a)) g.grad_ref(a).map().middleRows(r0, n) += self.grad.map();
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        assert(!parts.empty());
        int R = val(parts[0]).rows, C = 0;
        for (Var p : parts) {
            assert(val(p).rows == R);
            C += val(p).cols;
        }
        Mat<S> out(R, C);
        int at = 0;
        std::vector<int> offsets;
        for (Var p : parts) {
            out.map().middleCols(at, val(p).cols) = val(p).map();
            offsets.push_back(at);
            at += val(p).cols;
        }
        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && any_needs(parts);
        if (n.needs_grad) {
            n.bw = [parts, offsets](Graph& g, Node& self) {
                for (size_t k = 0; k < parts.size(); ++k) {
                    if (!g.needs(parts[k])) continue;
                    Mat<S>& d = g.grad_ref(parts[k]);
                    d.map() += self.grad.map().middleCols(offsets[k], d.cols);
                }
            };
        }
        return push(std::move(n));
    }

    Var concat_rows(const std::vector<Var>& parts) {
        assert(!parts.empty());
        int C = val(parts[0]).cols, R = 0;
        for (Var p : parts) {
            assert(val(p).cols == C);
            R += val(p).rows;
        }
        Mat<S> out(R, C);
        int at = 0;
        std::vector<int> offsets;
        for (Var p : parts) {
            out.map().middleRows(at, val(p).rows) = val(p).map();
            offsets.push_back(at);
            at += val(p).rows;
        }
        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && any_needs(parts);
        if (n.needs_grad) {
            n.bw = [parts, offsets](Graph& g, Node& self) {
                for (size_t k = 0; k < parts.size(); ++k) {
                    if (!g.needs(parts[k])) continue;
                    Mat<S>& d = g.grad_ref(parts[k]);
                    d.map() += self.grad.map().middleRows(offsets[k], d.rows);
                }
            };
        }
        return push(std::move(n));
    }

    // Row gather from an embedding table; ids are fixed integers.
    Var gather_rows(Var table, std::vector<int> ids) {
        const Mat<S>& T = val(table);
        Mat<S> out(static_cast<int>(ids.size()), T.cols);
        for (size_t r = 0; r < ids.size(); ++r) {
            assert(ids[r] >= 0 && ids[r] < T.rows);
            out.map().row(static_cast<int>(r)) = T.map().row(ids[r]);
        }
        return unary(std::move(out), table, [table, ids = std::move(ids)](Graph& g, Node& self) {
            if (!g.needs(table)) return;
            Mat<S>& d = g.grad_ref(table);
            for (size_t r = 0; r < ids.size(); ++r)
                d.map().row(ids[r]) += self.grad.map().row(static_cast<int>(r));
        });
    }

    // Mean squared error against a fixed target; returns a [1,1] scalar.
    Var mse_to(Var a, const Mat<S>& target) {
        const Mat<S>& A = val(a);
        assert(A.same_shape(target));
        S acc = 0;
        for (size_t i = 0; i < A.size(); ++i) {
            S d = A.at(i) - target.at(i);
            acc += d * d;
        }
        Mat<S> out(1, 1);
        out(0, 0) = acc / static_cast<S>(A.size());
        return unary(std::move(out), a, [a, target](Graph& g, Node& self) {
            if (!g.needs(a)) return;
            const Mat<S>& X = g.val(a);
            Mat<S>& dx = g.grad_ref(a);
            S c = self.grad(0, 0) * S(2) / static_cast<S>(X.size());
            for (size_t i = 0; i < X.size(); ++i) dx.at(i) += c * (X.at(i) - target.at(i));
        });
    }

    Var mean_scalars(const std::vector<Var>& xs) {
        assert(!xs.empty());
        Mat<S> out(1, 1);
        for (Var x : xs) {
            assert(val(x).rows == 1 && val(x).cols == 1);
            out(0, 0) += val(x)(0, 0);
        }
        out(0, 0) /= static_cast<S>(xs.size());
        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && any_needs(xs);
        if (n.needs_grad) {
            n.bw = [xs](Graph& g, Node& self) {
                S c = self.grad(0, 0) / static_cast<S>(xs.size());
                for (Var x : xs)
                    if (g.needs(x)) g.grad_ref(x)(0, 0) += c;
            };
        }
        return push(std::move(n));
    }

    // ---- backward -----------------------------------------------------

    void backward(Var loss) {
        assert(recording_);
        assert(val(loss).rows == 1 && val(loss).cols == 1);
        grad_ref(loss)(0, 0) = S(1);
        for (int i = loss.i; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || !n.bw || n.grad.size() == 0) continue;
            n.bw(*this, n);
        }
        for (auto& [idx, sink] : sinks_) {
            Node& n = nodes_[idx];
            if (n.grad.size() == 0) continue;
            assert(sink->same_shape(n.grad));
            sink->map() += n.grad.map();
        }
    }

    bool needs(Var v) const { return nodes_[v.i].needs_grad; }

    Mat<S>& grad_ref(Var v) {
        Node& n = nodes_[v.i];
        if (n.grad.size() == 0) n.grad = Mat<S>(n.value.rows, n.value.cols);
        return n.grad;
    }

private:
    const Mat<S>& val(Var v) const { return nodes_[v.i].value; }

    bool any_needs(const std::vector<Var>& xs) const {
        for (Var x : xs)
            if (needs(x)) return true;
        return false;
    }

    Var push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <typename F>
    Var unary(Mat<S>&& out, Var a, F&& bw) {
        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && needs(a);
        if (n.needs_grad) n.bw = std::forward<F>(bw);
        return push(std::move(n));
    }

    template <typename F>
    Var unary_or_binary(Mat<S>&& out, Var a, Var b, F&& bw) {
        Node n;
        n.value = std::move(out);
        n.needs_grad = recording_ && (needs(a) || needs(b));
        if (n.needs_grad) n.bw = std::forward<F>(bw);
        return push(std::move(n));
    }

    bool recording_;
    std::vector<Node> nodes_;
    std::vector<std::pair<int, Mat<S>*>> sinks_;
};

}  // namespace motionlab::ad
