#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "tome/mat.hpp"

namespace tome {

// Reverse-mode tape over dense matrices. Nodes are created in forward order;
// backward() walks them in reverse, accumulating gradients into every node
// that transitively needs them. Templated on the scalar so the same graph can
// run in float (default) or double (gradient checks).
template <typename T>
class Tape {
public:
    using Id = int;
    static constexpr T kLayerNormEps = T(1e-6);

    struct Node {
        Mat<T> value;
        Mat<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&, Id)> backward;  // may be empty (leaf/const)
    };

    Id leaf(Mat<T> value, bool needs_grad) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad) n.grad = Mat<T>(n.value.rows, n.value.cols);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id constant(Mat<T> value) { return leaf(std::move(value), false); }

    const Mat<T>& value(Id id) const { return nodes_[id].value; }
    const Mat<T>& grad(Id id) const { return nodes_[id].grad; }
    bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- arithmetic ----

    // c = a + b; b may be 1 x C for row broadcast.
    Id add(Id a, Id b) {
        const Mat<T>& A = nodes_[a].value;
        const Mat<T>& B = nodes_[b].value;
        bool bcast = (B.rows == 1 && A.rows != 1);
        assert(bcast ? (A.cols == B.cols) : A.same_shape(B));
        Mat<T> out = A;
        for (int i = 0; i < out.rows; ++i) {
            const T* brow = bcast ? B.row(0) : B.row(i);
            T* orow = out.row(i);
            for (int j = 0; j < out.cols; ++j) orow[j] += brow[j];
        }
        return emit(std::move(out), {a, b}, [a, b, bcast](Tape& t, Id self) {
            const Mat<T>& g = t.nodes_[self].grad;
            if (t.nodes_[a].needs_grad) {
                Mat<T>& ga = t.nodes_[a].grad;
                for (std::size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i];
            }
            if (t.nodes_[b].needs_grad) {
                Mat<T>& gb = t.nodes_[b].grad;
                if (bcast) {
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gb.a[j] += g.at(i, j);
                } else {
                    for (std::size_t i = 0; i < g.a.size(); ++i) gb.a[i] += g.a[i];
                }
            }
        });
    }

    Id scale(Id a, T c) {
        Mat<T> out = nodes_[a].value;
        for (auto& v : out.a) v *= c;
        return emit(std::move(out), {a}, [a, c](Tape& t, Id self) {
            if (!t.nodes_[a].needs_grad) return;
            const Mat<T>& g = t.nodes_[self].grad;
            Mat<T>& ga = t.nodes_[a].grad;
            for (std::size_t i = 0; i < g.a.size(); ++i) ga.a[i] += c * g.a[i];
        });
    }

    // C = op(A) * op(B) with optional transposes.
    Id matmul(Id a, Id b, bool ta = false, bool tb = false) {
        const Mat<T>& A = nodes_[a].value;
        const Mat<T>& B = nodes_[b].value;
        int m = ta ? A.cols : A.rows;
        int k = ta ? A.rows : A.cols;
        int k2 = tb ? B.cols : B.rows;
        int n = tb ? B.rows : B.cols;
        assert(k == k2);
        (void)k;
        (void)k2;
        Mat<T> out(m, n);
        gemm_acc(out, A, B, ta, tb, false);
        return emit(std::move(out), {a, b}, [a, b, ta, tb](Tape& t, Id self) {
            const Mat<T>& G = t.nodes_[self].grad;
            const Mat<T>& A2 = t.nodes_[a].value;
            const Mat<T>& B2 = t.nodes_[b].value;
            if (t.nodes_[a].needs_grad) {
                // dA = G op(B)^T routed through the transpose flags
                if (!ta)
                    gemm_acc(t.nodes_[a].grad, G, B2, false, !tb, true);
                else
                    gemm_acc(t.nodes_[a].grad, B2, G, tb, true, true);
            }
            if (t.nodes_[b].needs_grad) {
                if (!tb)
                    gemm_acc(t.nodes_[b].grad, A2, G, !ta, false, true);
                else
                    gemm_acc(t.nodes_[b].grad, G, A2, true, ta, true);
            }
        });
    }

    // ---- nonlinearities ----

    Id gelu(Id a) {
        const Mat<T>& A = nodes_[a].value;
        Mat<T> out(A.rows, A.cols);
        for (std::size_t i = 0; i < A.a.size(); ++i) {
            double x = static_cast<double>(A.a[i]);
            out.a[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))));
        }
        return emit(std::move(out), {a}, [a](Tape& t, Id self) {
            if (!t.nodes_[a].needs_grad) return;
            const Mat<T>& g = t.nodes_[self].grad;
            const Mat<T>& A2 = t.nodes_[a].value;
            Mat<T>& ga = t.nodes_[a].grad;
            for (std::size_t i = 0; i < g.a.size(); ++i) {
                double x = static_cast<double>(A2.a[i]);
                double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
                double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
                ga.a[i] += g.a[i] * static_cast<T>(cdf + x * pdf);
            }
        });
    }

    Id softmax_rows(Id a) {
        const Mat<T>& A = nodes_[a].value;
        Mat<T> out(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            const T* x = A.row(i);
            T* y = out.row(i);
            T mx = x[0];
            for (int j = 1; j < A.cols; ++j) mx = std::max(mx, x[j]);
            T sum = T(0);
            for (int j = 0; j < A.cols; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            for (int j = 0; j < A.cols; ++j) y[j] /= sum;
        }
        return emit(std::move(out), {a}, [a](Tape& t, Id self) {
            if (!t.nodes_[a].needs_grad) return;
            const Mat<T>& y = t.nodes_[self].value;
            const Mat<T>& g = t.nodes_[self].grad;
            Mat<T>& ga = t.nodes_[a].grad;
            for (int i = 0; i < y.rows; ++i) {
                T inner = T(0);
                for (int j = 0; j < y.cols; ++j) inner += g.at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - inner);
            }
        });
    }

    // Row-wise layer norm with affine gain/bias (1 x C leaves).
    Id layer_norm(Id a, Id gain, Id bias) {
        const Mat<T>& A = nodes_[a].value;
        const Mat<T>& G = nodes_[gain].value;
        const Mat<T>& B = nodes_[bias].value;
        assert(G.rows == 1 && G.cols == A.cols && B.rows == 1 && B.cols == A.cols);
        Mat<T> out(A.rows, A.cols);
        Mat<T> xhat(A.rows, A.cols);
        std::vector<T> inv_std(A.rows);
        const int C = A.cols;
        for (int i = 0; i < A.rows; ++i) {
            const T* x = A.row(i);
            T mean = T(0);
            for (int j = 0; j < C; ++j) mean += x[j];
            mean /= static_cast<T>(C);
            T var = T(0);
            for (int j = 0; j < C; ++j) var += (x[j] - mean) * (x[j] - mean);
            var /= static_cast<T>(C);
            T is = T(1) / std::sqrt(var + kLayerNormEps);
            inv_std[i] = is;
            for (int j = 0; j < C; ++j) {
                xhat.at(i, j) = (x[j] - mean) * is;
                out.at(i, j) = G.at(0, j) * xhat.at(i, j) + B.at(0, j);
            }
        }
        auto xh = std::make_shared<Mat<T>>(std::move(xhat));
        auto is = std::make_shared<std::vector<T>>(std::move(inv_std));
        return emit(std::move(out), {a, gain, bias}, [a, gain, bias, xh, is](Tape& t, Id self) {
            const Mat<T>& g = t.nodes_[self].grad;
            const Mat<T>& G2 = t.nodes_[gain].value;
            const int C = g.cols;
            if (t.nodes_[gain].needs_grad) {
                Mat<T>& gg = t.nodes_[gain].grad;
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < C; ++j) gg.a[j] += g.at(i, j) * xh->at(i, j);
            }
            if (t.nodes_[bias].needs_grad) {
                Mat<T>& gb = t.nodes_[bias].grad;
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < C; ++j) gb.a[j] += g.at(i, j);
            }
            if (t.nodes_[a].needs_grad) {
                Mat<T>& ga = t.nodes_[a].grad;
                for (int i = 0; i < g.rows; ++i) {
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int j = 0; j < C; ++j) {
                        T dxh = g.at(i, j) * G2.at(0, j);
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh->at(i, j);
                    }
                    const T invC = T(1) / static_cast<T>(C);
                    for (int j = 0; j < C; ++j) {
                        T dxh = g.at(i, j) * G2.at(0, j);
                        ga.at(i, j) += (*is)[i] * (dxh - invC * sum_dxhat - xh->at(i, j) * invC * sum_dxhat_xhat);
                    }
                }
            }
        });
    }

    // ---- shape ops ----

    Id gather_rows(Id a, std::vector<int> idx) {
        const Mat<T>& A = nodes_[a].value;
        Mat<T> out(static_cast<int>(idx.size()), A.cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            assert(idx[i] >= 0 && idx[i] < A.rows);
            std::copy(A.row(idx[i]), A.row(idx[i]) + A.cols, out.row(static_cast<int>(i)));
        }
        auto shared = std::make_shared<std::vector<int>>(std::move(idx));
        return emit(std::move(out), {a}, [a, shared](Tape& t, Id self) {
            if (!t.nodes_[a].needs_grad) return;
            const Mat<T>& g = t.nodes_[self].grad;
            Mat<T>& ga = t.nodes_[a].grad;
            for (std::size_t i = 0; i < shared->size(); ++i) {
                const T* src = g.row(static_cast<int>(i));
                T* dst = ga.row((*shared)[i]);
                for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
            }
        });
    }

    // out = base with row idx[j] replaced by rows[j]; indices must be unique.
    Id replace_rows(Id base, std::vector<int> idx, Id rows) {
        const Mat<T>& B = nodes_[base].value;
        const Mat<T>& R = nodes_[rows].value;
        assert(static_cast<int>(idx.size()) == R.rows && B.cols == R.cols);
        Mat<T> out = B;
        for (std::size_t j = 0; j < idx.size(); ++j)
            std::copy(R.row(static_cast<int>(j)), R.row(static_cast<int>(j)) + R.cols, out.row(idx[j]));
        auto shared = std::make_shared<std::vector<int>>(std::move(idx));
        return emit(std::move(out), {base, rows}, [base, rows, shared](Tape& t, Id self) {
            const Mat<T>& g = t.nodes_[self].grad;
            if (t.nodes_[base].needs_grad) {
                Mat<T>& gb = t.nodes_[base].grad;
                std::vector<bool> replaced(g.rows, false);
                for (int i : *shared) replaced[i] = true;
                for (int i = 0; i < g.rows; ++i) {
                    if (replaced[i]) continue;
                    const T* src = g.row(i);
                    T* dst = gb.row(i);
                    for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
                }
            }
            if (t.nodes_[rows].needs_grad) {
                Mat<T>& gr = t.nodes_[rows].grad;
                for (std::size_t j = 0; j < shared->size(); ++j) {
                    const T* src = g.row((*shared)[j]);
                    T* dst = gr.row(static_cast<int>(j));
                    for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
                }
            }
        });
    }

    Id concat_rows(const std::vector<Id>& parts) {
        assert(!parts.empty());
        int cols = nodes_[parts[0]].value.cols;
        int rows = 0;
        for (Id p : parts) {
            assert(nodes_[p].value.cols == cols);
            rows += nodes_[p].value.rows;
        }
        Mat<T> out(rows, cols);
        int r = 0;
        for (Id p : parts) {
            const Mat<T>& P = nodes_[p].value;
            std::copy(P.a.begin(), P.a.end(), out.row(r));
            r += P.rows;
        }
        auto shared = std::make_shared<std::vector<Id>>(parts);
        return emit(std::move(out), parts, [shared](Tape& t, Id self) {
            const Mat<T>& g = t.nodes_[self].grad;
            int r = 0;
            for (Id p : *shared) {
                Mat<T>& gp = t.nodes_[p].grad;
                int pr = t.nodes_[p].value.rows;
                if (t.nodes_[p].needs_grad) {
                    for (int i = 0; i < pr; ++i)
                        for (int j = 0; j < g.cols; ++j) gp.at(i, j) += g.at(r + i, j);
                }
                r += pr;
            }
        });
    }

    Id concat_cols(const std::vector<Id>& parts) {
        assert(!parts.empty());
        int rows = nodes_[parts[0]].value.rows;
        int cols = 0;
        for (Id p : parts) {
            assert(nodes_[p].value.rows == rows);
            cols += nodes_[p].value.cols;
        }
        Mat<T> out(rows, cols);
        int c = 0;
        for (Id p : parts) {
            const Mat<T>& P = nodes_[p].value;
            for (int i = 0; i < rows; ++i)
                std::copy(P.row(i), P.row(i) + P.cols, out.row(i) + c);
            c += P.cols;
        }
        auto shared = std::make_shared<std::vector<Id>>(parts);
        return emit(std::move(out), parts, [shared](Tape& t, Id self) {
            const Mat<T>& g = t.nodes_[self].grad;
            int c = 0;
            for (Id p : *shared) {
                int pc = t.nodes_[p].value.cols;
                if (t.nodes_[p].needs_grad) {
                    Mat<T>& gp = t.nodes_[p].grad;
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, c + j);
                }
                c += pc;
            }
        });
    }

    Id slice_cols(Id a, int c0, int len) {
        const Mat<T>& A = nodes_[a].value;
        assert(c0 >= 0 && c0 + len <= A.cols);
        Mat<T> out(A.rows, len);
        for (int i = 0; i < A.rows; ++i) std::copy(A.row(i) + c0, A.row(i) + c0 + len, out.row(i));
        return emit(std::move(out), {a}, [a, c0, len](Tape& t, Id self) {
            if (!t.nodes_[a].needs_grad) return;
            const Mat<T>& g = t.nodes_[self].grad;
            Mat<T>& ga = t.nodes_[a].grad;
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < len; ++j) ga.at(i, c0 + j) += g.at(i, j);
        });
    }

    // ---- losses ----

    // Mean of -log softmax(logits_i)[labels_i] over rows; 1x1 output.
    Id cross_entropy_rows(Id logits, std::vector<int> labels) {
        const Mat<T>& L = nodes_[logits].value;
        assert(static_cast<int>(labels.size()) == L.rows && L.rows > 0);
        Mat<T> probs(L.rows, L.cols);
        double total = 0.0;
        for (int i = 0; i < L.rows; ++i) {
            const T* x = L.row(i);
            T mx = x[0];
            for (int j = 1; j < L.cols; ++j) mx = std::max(mx, x[j]);
            double sum = 0.0;
            for (int j = 0; j < L.cols; ++j) {
                double e = std::exp(static_cast<double>(x[j] - mx));
                probs.at(i, j) = static_cast<T>(e);
                sum += e;
            }
            for (int j = 0; j < L.cols; ++j) probs.at(i, j) = static_cast<T>(probs.at(i, j) / sum);
            assert(labels[i] >= 0 && labels[i] < L.cols);
            total += -std::log(static_cast<double>(probs.at(i, labels[i])) + 1e-300);
        }
        Mat<T> out(1, 1);
        out.at(0, 0) = static_cast<T>(total / L.rows);
        auto pr = std::make_shared<Mat<T>>(std::move(probs));
        auto lab = std::make_shared<std::vector<int>>(std::move(labels));
        return emit(std::move(out), {logits}, [logits, pr, lab](Tape& t, Id self) {
            if (!t.nodes_[logits].needs_grad) return;
            T g = t.nodes_[self].grad.at(0, 0);
            Mat<T>& gl = t.nodes_[logits].grad;
            const T invn = T(1) / static_cast<T>(pr->rows);
            for (int i = 0; i < pr->rows; ++i) {
                for (int j = 0; j < pr->cols; ++j) {
                    T delta = (j == (*lab)[i]) ? T(1) : T(0);
                    gl.at(i, j) += g * invn * (pr->at(i, j) - delta);
                }
            }
        });
    }

    // Escape hatch for losses with hand-derived gradients. backward receives
    // the upstream scalar gradient and must accumulate into the parents.
    Id custom(Mat<T> value, const std::vector<Id>& parents,
              std::function<void(Tape&, Id)> backward) {
        return emit(std::move(value), parents, std::move(backward));
    }

    void backward(Id loss) {
        assert(nodes_[loss].value.rows == 1 && nodes_[loss].value.cols == 1);
        require(std::isfinite(static_cast<double>(nodes_[loss].value.at(0, 0))), ErrorCode::non_finite,
                "loss is not finite");
        if (!nodes_[loss].needs_grad) return;
        nodes_[loss].grad.at(0, 0) = T(1);
        for (Id id = loss; id >= 0; --id) {
            if (nodes_[id].backward && nodes_[id].needs_grad) nodes_[id].backward(*this, id);
        }
    }

    Mat<T>& mutable_grad(Id id) { return nodes_[id].grad; }

    // Drops all nodes from n onward; lets inference loops reuse the leading
    // parameter leaves across forwards instead of re-registering them.
    void truncate(std::size_t n) {
        assert(n <= nodes_.size());
        nodes_.resize(n);
    }

private:
    Id emit(Mat<T> value, const std::vector<Id>& parents, std::function<void(Tape&, Id)> backward) {
        Node n;
        n.value = std::move(value);
        for (Id p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
        if (n.needs_grad) {
            n.grad = Mat<T>(n.value.rows, n.value.cols);
            n.backward = std::move(backward);
        }
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    // out (+)= op(A) * op(B)
    static void gemm_acc(Mat<T>& out, const Mat<T>& A, const Mat<T>& B, bool ta, bool tb, bool accumulate) {
        int m = ta ? A.cols : A.rows;
        int k = ta ? A.rows : A.cols;
        int n = tb ? B.rows : B.cols;
        assert(out.rows == m && out.cols == n);
        if (!accumulate) out.fill(T(0));
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                T av = ta ? A.at(p, i) : A.at(i, p);
                if (av == T(0)) continue;
                T* orow = out.row(i);
                if (!tb) {
                    const T* brow = B.row(p);
                    for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
                } else {
                    for (int j = 0; j < n; ++j) orow[j] += av * B.at(j, p);
                }
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace tome
