#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "emscat/nn.hpp"

namespace emscat::nn {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (auto d : shape_) n *= d;
    data_.assign(n, 0.0);
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw NnError("tensor is not 2D");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw NnError("tensor is not 2D");
    return shape_[1];
}

void Tensor::checkFinite(const char* what) const {
    for (double v : data_)
        if (!std::isfinite(v)) throw NnError(std::string(what) + ": non-finite value");
}

Tensor& Node::ensureGrad() {
    if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
    return grad;
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var parameter_leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requiresGrad = true;
    n->ensureGrad();
    return n;
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needsGrad = false;
    for (const auto& p : parents) needsGrad = needsGrad || p->requiresGrad;
    n->requiresGrad = needsGrad;
    if (needsGrad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void topo(const Var& v, std::unordered_set<Node*>& seen, std::vector<Var>& order) {
    if (!v->requiresGrad || seen.count(v.get())) return;
    seen.insert(v.get());
    for (const auto& p : v->parents) topo(p, seen, order);
    order.push_back(v);
}

}  // namespace

void backward(const Var& loss) {
    if (loss->value.size() != 1) throw NnError("backward: loss must be a scalar");
    if (loss->lossConsumed) throw NnError("backward: repeated backward without reset");
    loss->lossConsumed = true;
    if (!loss->requiresGrad) return;

    std::unordered_set<Node*> seen;
    std::vector<Var> order;
    topo(loss, seen, order);
    for (const auto& v : order) v->ensureGrad().fill(0.0);
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.backprop) n.backprop(n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise / broadcast ops

Var add(const Var& a, const Var& b) {
    if (!a->value.sameShape(b->value)) throw NnError("add: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requiresGrad) {
            Tensor& g = a->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (b->requiresGrad) {
            Tensor& g = b->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.sameShape(b->value)) throw NnError("sub: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requiresGrad) {
            Tensor& g = a->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (b->requiresGrad) {
            Tensor& g = b->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.sameShape(b->value)) throw NnError("mul: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requiresGrad) {
            Tensor& g = a->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b->value[i];
        }
        if (b->requiresGrad) {
            Tensor& g = b->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out.data()) v *= s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
}

Var addScalar(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.data()) v += c;
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var powScalar(const Var& a, double p) {
    Tensor out = a->value;
    for (auto& v : out.data()) v = std::pow(v, p);
    return make_node(std::move(out), {a}, [a, p](Node& n) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * p * std::pow(a->value[i], p - 1.0);
    });
}

Var addRowBroadcast(const Var& mat, const Var& row) {
    std::size_t n = mat->value.rows(), f = mat->value.cols();
    if (row->value.size() != f) throw NnError("addRowBroadcast: width mismatch");
    Tensor out = mat->value;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) out.at(r, c) += row->value[c];
    return make_node(std::move(out), {mat, row}, [mat, row, n, f](Node& nd) {
        if (mat->requiresGrad) {
            Tensor& g = mat->ensureGrad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
        }
        if (row->requiresGrad) {
            Tensor& g = row->ensureGrad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < f; ++c) g[c] += nd.grad.at(r, c);
        }
    });
}

Var repeatRows(const Var& row, std::size_t n) {
    std::size_t f = row->value.cols();
    if (row->value.rows() != 1) throw NnError("repeatRows: expected a single row");
    Tensor out = Tensor::matrix(n, f);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) out.at(r, c) = row->value[c];
    return make_node(std::move(out), {row}, [row, n, f](Node& nd) {
        Tensor& g = row->ensureGrad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) g[c] += nd.grad.at(r, c);
    });
}

Var colMean(const Var& mat) {
    std::size_t n = mat->value.rows(), f = mat->value.cols();
    Tensor out = Tensor::matrix(1, f);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) out[c] += mat->value.at(r, c);
    for (std::size_t c = 0; c < f; ++c) out[c] /= static_cast<double>(n);
    return make_node(std::move(out), {mat}, [mat, n, f](Node& nd) {
        Tensor& g = mat->ensureGrad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) g.at(r, c) += nd.grad[c] / static_cast<double>(n);
    });
}

Var mulColBroadcast(const Var& mat, const Var& col) {
    std::size_t n = mat->value.rows(), f = mat->value.cols();
    if (col->value.rows() != n || col->value.cols() != 1)
        throw NnError("mulColBroadcast: column shape mismatch");
    Tensor out = mat->value;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) out.at(r, c) *= col->value[r];
    return make_node(std::move(out), {mat, col}, [mat, col, n, f](Node& nd) {
        if (mat->requiresGrad) {
            Tensor& g = mat->ensureGrad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < f; ++c) g.at(r, c) += nd.grad.at(r, c) * col->value[r];
        }
        if (col->requiresGrad) {
            Tensor& g = col->ensureGrad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < f; ++c) g[r] += nd.grad.at(r, c) * mat->value.at(r, c);
        }
    });
}

// ---------------------------------------------------------------------------
// Structural ops

Var matmul(const Var& a, const Var& b) {
    std::size_t n = a->value.rows(), k = a->value.cols();
    std::size_t k2 = b->value.rows(), m = b->value.cols();
    if (k != k2) throw NnError("matmul: inner dimension mismatch");
    Tensor out = Tensor::matrix(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = a->value.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out.at(i, j) += av * b->value.at(p, j);
        }
    return make_node(std::move(out), {a, b}, [a, b, n, k, m](Node& nd) {
        if (a->requiresGrad) {
            Tensor& g = a->ensureGrad();  // dA = dO * B^T
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double gv = nd.grad.at(i, j);
                    if (gv == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) g.at(i, p) += gv * b->value.at(p, j);
                }
        }
        if (b->requiresGrad) {
            Tensor& g = b->ensureGrad();  // dB = A^T * dO
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double av = a->value.at(i, p);
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j) g.at(p, j) += av * nd.grad.at(i, j);
                }
        }
    });
}

Var transpose(const Var& a) {
    std::size_t n = a->value.rows(), m = a->value.cols();
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at(j, i) = a->value.at(i, j);
    return make_node(std::move(out), {a}, [a, n, m](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g.at(i, j) += nd.grad.at(j, i);
    });
}

Var concatCols(const std::vector<Var>& parts) {
    if (parts.empty()) throw NnError("concatCols: no inputs");
    std::size_t n = parts[0]->value.rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != n) throw NnError("concatCols: row mismatch");
        total += p->value.cols();
    }
    Tensor out = Tensor::matrix(n, total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t f = p->value.cols();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) out.at(r, off + c) = p->value.at(r, c);
        off += f;
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_node(std::move(out), parents, [parts, n](Node& nd) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::size_t f = p->value.cols();
            if (p->requiresGrad) {
                Tensor& g = p->ensureGrad();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < f; ++c) g.at(r, c) += nd.grad.at(r, off + c);
            }
            off += f;
        }
    });
}

Var sliceCols(const Var& a, std::size_t c0, std::size_t c1) {
    std::size_t n = a->value.rows(), m = a->value.cols();
    if (c0 >= c1 || c1 > m) throw NnError("sliceCols: bad range");
    Tensor out = Tensor::matrix(n, c1 - c0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = a->value.at(r, c);
    return make_node(std::move(out), {a}, [a, n, c0, c1](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = c0; c < c1; ++c) g.at(r, c) += nd.grad.at(r, c - c0);
    });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out(shape);
    if (out.size() != a->value.size()) throw NnError("reshape: element count mismatch");
    out.data() = a->value.data();
    return make_node(std::move(out), {a}, [a](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    });
}

Var gatherRows(const Var& a, std::vector<int> indices) {
    std::size_t f = a->value.cols();
    std::size_t n = a->value.rows();
    Tensor out = Tensor::matrix(indices.size(), f);
    for (std::size_t e = 0; e < indices.size(); ++e) {
        int r = indices[e];
        if (r < 0 || static_cast<std::size_t>(r) >= n) throw NnError("gatherRows: index out of range");
        for (std::size_t c = 0; c < f; ++c) out.at(e, c) = a->value.at(r, c);
    }
    return make_node(std::move(out), {a},
                     [a, idx = std::move(indices), f](Node& nd) {
                         Tensor& g = a->ensureGrad();
                         for (std::size_t e = 0; e < idx.size(); ++e)
                             for (std::size_t c = 0; c < f; ++c)
                                 g.at(idx[e], c) += nd.grad.at(e, c);
                     });
}

Var segmentSum(const Var& a, std::vector<int> segments, std::size_t nSegments) {
    std::size_t f = a->value.cols();
    if (segments.size() != a->value.rows()) throw NnError("segmentSum: segment count mismatch");
    Tensor out = Tensor::matrix(nSegments, f);
    for (std::size_t e = 0; e < segments.size(); ++e) {
        int s = segments[e];
        if (s < 0 || static_cast<std::size_t>(s) >= nSegments)
            throw NnError("segmentSum: segment out of range");
        for (std::size_t c = 0; c < f; ++c) out.at(s, c) += a->value.at(e, c);
    }
    return make_node(std::move(out), {a},
                     [a, seg = std::move(segments), f](Node& nd) {
                         Tensor& g = a->ensureGrad();
                         for (std::size_t e = 0; e < seg.size(); ++e)
                             for (std::size_t c = 0; c < f; ++c)
                                 g.at(e, c) += nd.grad.at(seg[e], c);
                     });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var relu(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data()) v = v > 0 ? v : 0.0;
    return make_node(std::move(out), {a}, [a](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a->value[i] > 0) g[i] += nd.grad[i];
    });
}

Var leakyRelu(const Var& a, double slope) {
    Tensor out = a->value;
    for (auto& v : out.data()) v = v > 0 ? v : slope * v;
    return make_node(std::move(out), {a}, [a, slope](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += nd.grad[i] * (a->value[i] > 0 ? 1.0 : slope);
    });
}

Var elu(const Var& a, double alpha) {
    Tensor out = a->value;
    for (auto& v : out.data()) v = v > 0 ? v : alpha * (std::exp(v) - 1.0);
    return make_node(std::move(out), {a}, [a, alpha](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            double x = a->value[i];
            g[i] += nd.grad[i] * (x > 0 ? 1.0 : alpha * std::exp(x));
        }
    });
}

Var rowSoftmax(const Var& a) {
    std::size_t n = a->value.rows(), m = a->value.cols();
    if (m == 0) throw NnError("rowSoftmax: empty rows");
    Tensor out = Tensor::matrix(n, m);
    for (std::size_t r = 0; r < n; ++r) {
        double mx = a->value.at(r, 0);
        for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, a->value.at(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            out.at(r, c) = std::exp(a->value.at(r, c) - mx);
            sum += out.at(r, c);
        }
        for (std::size_t c = 0; c < m; ++c) out.at(r, c) /= sum;
    }
    Tensor saved = out;
    return make_node(std::move(out), {a}, [a, saved, n, m](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < m; ++c) dot += nd.grad.at(r, c) * saved.at(r, c);
            for (std::size_t c = 0; c < m; ++c)
                g.at(r, c) += saved.at(r, c) * (nd.grad.at(r, c) - dot);
        }
    });
}

Var segmentSoftmax(const Var& logits, std::vector<int> segments, std::size_t nSegments) {
    std::size_t e = logits->value.rows();
    if (logits->value.cols() != 1) throw NnError("segmentSoftmax: expected a column");
    if (segments.size() != e) throw NnError("segmentSoftmax: segment count mismatch");
    std::vector<double> segMax(nSegments, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < e; ++i)
        segMax[segments[i]] = std::max(segMax[segments[i]], logits->value[i]);
    Tensor out = Tensor::matrix(e, 1);
    std::vector<double> segSum(nSegments, 0.0);
    for (std::size_t i = 0; i < e; ++i) {
        out[i] = std::exp(logits->value[i] - segMax[segments[i]]);
        segSum[segments[i]] += out[i];
    }
    for (std::size_t i = 0; i < e; ++i) out[i] /= segSum[segments[i]];
    Tensor saved = out;
    return make_node(std::move(out), {logits},
                     [logits, saved, seg = std::move(segments), nSegments](Node& nd) {
                         std::vector<double> segDot(nSegments, 0.0);
                         for (std::size_t i = 0; i < saved.size(); ++i)
                             segDot[seg[i]] += nd.grad[i] * saved[i];
                         Tensor& g = logits->ensureGrad();
                         for (std::size_t i = 0; i < saved.size(); ++i)
                             g[i] += saved[i] * (nd.grad[i] - segDot[seg[i]]);
                     });
}

Var sumAll(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data()) s += v;
    return make_node(Tensor::scalar(s), {a}, [a](Node& nd) {
        Tensor& g = a->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[0];
    });
}

Var tangentialProject(const Var& a, const std::vector<std::array<double, 3>>& normals) {
    std::size_t n = a->value.rows();
    if (a->value.cols() != 6) throw NnError("tangentialProject: expected 6 channels");
    if (normals.size() != n) throw NnError("tangentialProject: normal count mismatch");
    auto project = [n, normals](const Tensor& src, Tensor& dst) {
        for (std::size_t r = 0; r < n; ++r) {
            const auto& nv = normals[r];
            for (int part = 0; part < 2; ++part) {
                double x = src.at(r, part * 3), y = src.at(r, part * 3 + 1),
                       z = src.at(r, part * 3 + 2);
                double dot = x * nv[0] + y * nv[1] + z * nv[2];
                dst.at(r, part * 3) += x - dot * nv[0];
                dst.at(r, part * 3 + 1) += y - dot * nv[1];
                dst.at(r, part * 3 + 2) += z - dot * nv[2];
            }
        }
    };
    Tensor out = Tensor::matrix(n, 6);
    project(a->value, out);
    return make_node(std::move(out), {a}, [a, normals, project](Node& nd) {
        // the projector is symmetric, so the pullback is the same projection
        project(nd.grad, a->ensureGrad());
    });
}

// ---------------------------------------------------------------------------
// Sparse

Tensor SparseMatrix::apply(const Tensor& x) const {
    std::size_t f = x.cols();
    if (x.rows() != cols) throw NnError("SparseMatrix::apply: shape mismatch");
    Tensor out = Tensor::matrix(rows, f);
    for (const auto& e : entries)
        for (std::size_t c = 0; c < f; ++c) out.at(e.r, c) += e.v * x.at(e.c, c);
    return out;
}

Tensor SparseMatrix::applyTranspose(const Tensor& x) const {
    std::size_t f = x.cols();
    if (x.rows() != rows) throw NnError("SparseMatrix::applyTranspose: shape mismatch");
    Tensor out = Tensor::matrix(cols, f);
    for (const auto& e : entries)
        for (std::size_t c = 0; c < f; ++c) out.at(e.c, c) += e.v * x.at(e.r, c);
    return out;
}

Var spmm(const SparseMatrix& m, const Var& x) {
    Tensor out = m.apply(x->value);
    return make_node(std::move(out), {x}, [x, m](Node& nd) {
        Tensor back = m.applyTranspose(nd.grad);
        Tensor& g = x->ensureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
    });
}

}  // namespace emscat::nn
