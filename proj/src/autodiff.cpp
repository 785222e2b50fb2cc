#include "vcl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace vcl::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_slope(double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)) + x * pdf;
}

}  // namespace

Var Tape::push(DenseMatrix value, std::vector<std::uint32_t> inputs,
               std::function<void(Tape&, const Node&)> vjp,
               std::function<DenseMatrix(const Tape&, const Node&)> jvp) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (auto i : n.inputs) n.active = n.active || nodes_[i].active;
    if (n.active) {
        n.vjp = std::move(vjp);
        n.jvp = std::move(jvp);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(DenseMatrix value) {
    Node n;
    n.value = std::move(value);
    n.active = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(DenseMatrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

DenseMatrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    return DenseMatrix(n.value.rows(), n.value.cols());
}

DenseMatrix Tape::tangent(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.has_tangent) return n.tangent;
    return DenseMatrix(n.value.rows(), n.value.cols());
}

void Tape::accumulate(std::uint32_t id, const DenseMatrix& g) {
    Node& n = nodes_[id];
    if (!n.active) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

const DenseMatrix* Tape::tan(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.has_tangent ? &n.tangent : nullptr;
}

void Tape::backward(Var out, const DenseMatrix& seed) {
    require(nodes_[out.id].value.same_shape(seed), "Tape::backward: seed shape mismatch");
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = DenseMatrix();
    }
    accumulate(out.id, seed);
    for (std::size_t i = out.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.has_grad && n.vjp) n.vjp(*this, n);
    }
}

void Tape::backward(Var out) {
    const auto& v = nodes_[out.id].value;
    backward(out, DenseMatrix(v.rows(), v.cols(), 1.0));
}

void Tape::set_tangent(Var leaf, DenseMatrix t) {
    Node& n = nodes_[leaf.id];
    require(n.inputs.empty() && n.active, "Tape::set_tangent: not a variable leaf");
    require(n.value.same_shape(t), "Tape::set_tangent: shape mismatch");
    n.tangent = std::move(t);
    n.has_tangent = true;
}

void Tape::clear_tangents() {
    for (auto& n : nodes_) {
        n.has_tangent = false;
        n.tangent = DenseMatrix();
    }
}

void Tape::propagate_tangents() {
    for (auto& n : nodes_) {
        if (n.inputs.empty() || !n.jvp) continue;
        bool any = false;
        for (auto i : n.inputs) any = any || nodes_[i].has_tangent;
        n.has_tangent = any;
        if (any) n.tangent = n.jvp(*this, n);
    }
}

Var Tape::add(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    require(va.same_shape(vb), "Tape::add: shape mismatch");
    return push(
        va + vb, {a.id, b.id},
        [](Tape& t, const Node& n) {
            t.accumulate(n.inputs[0], n.grad);
            t.accumulate(n.inputs[1], n.grad);
        },
        [](const Tape& t, const Node& n) {
            DenseMatrix out(n.value.rows(), n.value.cols());
            if (auto* ta = t.tan(n.inputs[0])) out += *ta;
            if (auto* tb = t.tan(n.inputs[1])) out += *tb;
            return out;
        });
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "Tape::matmul: inner dimension mismatch");
    return push(
        vcl::matmul(value(a), value(b)), {a.id, b.id},
        [](Tape& t, const Node& n) {
            const auto& va = t.nodes_[n.inputs[0]].value;
            const auto& vb = t.nodes_[n.inputs[1]].value;
            if (t.nodes_[n.inputs[0]].active) t.accumulate(n.inputs[0], matmul_nt(n.grad, vb));
            if (t.nodes_[n.inputs[1]].active) t.accumulate(n.inputs[1], matmul_tn(va, n.grad));
        },
        [](const Tape& t, const Node& n) {
            const auto& va = t.nodes_[n.inputs[0]].value;
            const auto& vb = t.nodes_[n.inputs[1]].value;
            DenseMatrix out(n.value.rows(), n.value.cols());
            if (auto* ta = t.tan(n.inputs[0])) out += vcl::matmul(*ta, vb);
            if (auto* tb = t.tan(n.inputs[1])) out += vcl::matmul(va, *tb);
            return out;
        });
}

Var Tape::transpose(Var a) {
    return push(
        value(a).transpose(), {a.id},
        [](Tape& t, const Node& n) { t.accumulate(n.inputs[0], n.grad.transpose()); },
        [](const Tape& t, const Node& n) { return t.tan(n.inputs[0])->transpose(); });
}

Var Tape::add_row(Var x, Var bias) {
    const auto& vx = value(x);
    const auto& vb = value(bias);
    require(vb.rows() == 1 && vb.cols() == vx.cols(), "Tape::add_row: bias must be 1×cols");
    DenseMatrix out = vx;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vb(0, c);
    return push(
        std::move(out), {x.id, bias.id},
        [](Tape& t, const Node& n) {
            t.accumulate(n.inputs[0], n.grad);
            if (!t.nodes_[n.inputs[1]].active) return;
            DenseMatrix gb(1, n.grad.cols());
            for (std::size_t r = 0; r < n.grad.rows(); ++r)
                for (std::size_t c = 0; c < n.grad.cols(); ++c) gb(0, c) += n.grad(r, c);
            t.accumulate(n.inputs[1], gb);
        },
        [](const Tape& t, const Node& n) {
            DenseMatrix out(n.value.rows(), n.value.cols());
            if (auto* tx = t.tan(n.inputs[0])) out += *tx;
            if (auto* tb = t.tan(n.inputs[1])) {
                for (std::size_t r = 0; r < out.rows(); ++r)
                    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += (*tb)(0, c);
            }
            return out;
        });
}

Var Tape::scale(Var x, double s) {
    return push(
        value(x) * s, {x.id},
        [s](Tape& t, const Node& n) { t.accumulate(n.inputs[0], n.grad * s); },
        [s](const Tape& t, const Node& n) { return *t.tan(n.inputs[0]) * s; });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    const auto& vx = value(x);
    const auto& vg = value(gamma);
    const auto& vb = value(beta);
    require(vg.rows() == 1 && vb.rows() == 1 && vg.cols() == vx.cols() && vb.cols() == vx.cols(),
            "Tape::layer_norm_rows: gamma/beta must be 1×cols");
    require(eps > 0.0, "Tape::layer_norm_rows: eps must be positive");
    const std::size_t rows = vx.rows();
    const std::size_t d = vx.cols();
    // Cache normalized rows and inverse std for both sweeps.
    DenseMatrix xhat(rows, d);
    std::vector<double> inv(rows);
    DenseMatrix out(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = vx.row(r);
        double shift = 0.0;
        for (double v : row) shift += v - row[0];
        const double mean = row[0] + shift / static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (row[c] - mean) * inv[r];
            out(r, c) = vg(0, c) * xhat(r, c) + vb(0, c);
        }
    }
    return push(
        std::move(out), {x.id, gamma.id, beta.id},
        [xhat, inv](Tape& t, const Node& n) {
            const auto& g = t.nodes_[n.inputs[1]].value;
            const std::size_t rows = n.grad.rows();
            const std::size_t d = n.grad.cols();
            DenseMatrix dx(rows, d);
            DenseMatrix dg(1, d);
            DenseMatrix db(1, d);
            std::vector<double> dxhat(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double m1 = 0.0;
                double m2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dy = n.grad(r, c);
                    dg(0, c) += dy * xhat(r, c);
                    db(0, c) += dy;
                    dxhat[c] = dy * g(0, c);
                    m1 += dxhat[c];
                    m2 += dxhat[c] * xhat(r, c);
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (std::size_t c = 0; c < d; ++c) dx(r, c) = inv[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
            }
            t.accumulate(n.inputs[0], dx);
            t.accumulate(n.inputs[1], dg);
            t.accumulate(n.inputs[2], db);
        },
        [xhat, inv](const Tape& t, const Node& n) {
            const auto& g = t.nodes_[n.inputs[1]].value;
            const std::size_t rows = n.value.rows();
            const std::size_t d = n.value.cols();
            DenseMatrix out(rows, d);
            if (auto* tx = t.tan(n.inputs[0])) {
                for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0;
                    double m2 = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        m1 += (*tx)(r, c);
                        m2 += (*tx)(r, c) * xhat(r, c);
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c)
                        out(r, c) = g(0, c) * inv[r] * ((*tx)(r, c) - m1 - xhat(r, c) * m2);
                }
            }
            if (auto* tg = t.tan(n.inputs[1])) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < d; ++c) out(r, c) += (*tg)(0, c) * xhat(r, c);
            }
            if (auto* tb = t.tan(n.inputs[2])) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < d; ++c) out(r, c) += (*tb)(0, c);
            }
            return out;
        });
}

Var Tape::softmax_rows(Var x) {
    return push(
        vcl::softmax_rows(value(x)), {x.id},
        [](Tape& t, const Node& n) {
            const auto& y = n.value;
            DenseMatrix dx(y.rows(), y.cols());
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double s = dot(n.grad.row(r), y.row(r));
                for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (n.grad(r, c) - s);
            }
            t.accumulate(n.inputs[0], dx);
        },
        [](const Tape& t, const Node& n) {
            const auto& y = n.value;
            const auto& tx = *t.tan(n.inputs[0]);
            DenseMatrix out(y.rows(), y.cols());
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double s = dot(tx.row(r), y.row(r));
                for (std::size_t c = 0; c < y.cols(); ++c) out(r, c) = y(r, c) * (tx(r, c) - s);
            }
            return out;
        });
}

Var Tape::gelu(Var x) {
    const auto& vx = value(x);
    DenseMatrix out(vx.rows(), vx.cols());
    DenseMatrix slope(vx.rows(), vx.cols());
    for (std::size_t i = 0; i < vx.size(); ++i) {
        out.data()[i] = gelu_value(vx.data()[i]);
        slope.data()[i] = gelu_slope(vx.data()[i]);
    }
    return push(
        std::move(out), {x.id},
        [slope](Tape& t, const Node& n) {
            DenseMatrix dx = n.grad;
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= slope.data()[i];
            t.accumulate(n.inputs[0], dx);
        },
        [slope](const Tape& t, const Node& n) {
            DenseMatrix out = *t.tan(n.inputs[0]);
            for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= slope.data()[i];
            return out;
        });
}

Var Tape::gather(Var x, std::vector<std::uint32_t> index, std::size_t rows, std::size_t cols) {
    const auto& vx = value(x);
    require(index.size() == rows * cols, "Tape::gather: index length must equal rows*cols");
    DenseMatrix out(rows, cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < vx.size(), "Tape::gather: index out of range");
        out.data()[i] = vx.data()[index[i]];
    }
    auto shared = std::make_shared<const std::vector<std::uint32_t>>(std::move(index));
    return push(
        std::move(out), {x.id},
        [shared](Tape& t, const Node& n) {
            const auto& src = t.nodes_[n.inputs[0]].value;
            DenseMatrix dx(src.rows(), src.cols());
            for (std::size_t i = 0; i < shared->size(); ++i) dx.data()[(*shared)[i]] += n.grad.data()[i];
            t.accumulate(n.inputs[0], dx);
        },
        [shared](const Tape& t, const Node& n) {
            const auto& tx = *t.tan(n.inputs[0]);
            DenseMatrix out(n.value.rows(), n.value.cols());
            for (std::size_t i = 0; i < shared->size(); ++i) out.data()[i] = tx.data()[(*shared)[i]];
            return out;
        });
}

Var Tape::slice_rows(Var x, std::size_t first, std::size_t count) {
    const auto& vx = value(x);
    require(first + count <= vx.rows(), "Tape::slice_rows: range out of bounds");
    std::vector<std::uint32_t> idx;
    idx.reserve(count * vx.cols());
    for (std::size_t r = first; r < first + count; ++r)
        for (std::size_t c = 0; c < vx.cols(); ++c) idx.push_back(static_cast<std::uint32_t>(r * vx.cols() + c));
    return gather(x, std::move(idx), count, vx.cols());
}

Var Tape::slice_cols(Var x, std::size_t first, std::size_t count) {
    const auto& vx = value(x);
    require(first + count <= vx.cols(), "Tape::slice_cols: range out of bounds");
    std::vector<std::uint32_t> idx;
    idx.reserve(count * vx.rows());
    for (std::size_t r = 0; r < vx.rows(); ++r)
        for (std::size_t c = first; c < first + count; ++c) idx.push_back(static_cast<std::uint32_t>(r * vx.cols() + c));
    return gather(x, std::move(idx), vx.rows(), count);
}

Var Tape::concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "Tape::concat_rows: no parts");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t rows = 0;
    std::vector<std::uint32_t> ids;
    for (Var p : parts) {
        require(value(p).cols() == cols, "Tape::concat_rows: column mismatch");
        rows += value(p).rows();
        ids.push_back(p.id);
    }
    DenseMatrix out(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const auto& v = value(p);
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += v.size();
    }
    return push(
        std::move(out), std::move(ids),
        [](Tape& t, const Node& n) {
            std::size_t off = 0;
            for (auto id : n.inputs) {
                const auto& v = t.nodes_[id].value;
                DenseMatrix g(v.rows(), v.cols(),
                              std::vector<double>(n.grad.data().begin() + static_cast<std::ptrdiff_t>(off),
                                                  n.grad.data().begin() + static_cast<std::ptrdiff_t>(off + v.size())));
                t.accumulate(id, g);
                off += v.size();
            }
        },
        [](const Tape& t, const Node& n) {
            DenseMatrix out(n.value.rows(), n.value.cols());
            std::size_t off = 0;
            for (auto id : n.inputs) {
                const std::size_t sz = t.nodes_[id].value.size();
                if (auto* tp = t.tan(id))
                    std::copy(tp->data().begin(), tp->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
                off += sz;
            }
            return out;
        });
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "Tape::concat_cols: no parts");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    std::vector<std::uint32_t> ids;
    for (Var p : parts) {
        require(value(p).rows() == rows, "Tape::concat_cols: row mismatch");
        cols += value(p).cols();
        ids.push_back(p.id);
    }
    DenseMatrix out(rows, cols);
    std::size_t c0 = 0;
    for (Var p : parts) {
        const auto& v = value(p);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = v(r, c);
        c0 += v.cols();
    }
    return push(
        std::move(out), std::move(ids),
        [](Tape& t, const Node& n) {
            std::size_t c0 = 0;
            for (auto id : n.inputs) {
                const auto& v = t.nodes_[id].value;
                if (t.nodes_[id].active) {
                    DenseMatrix g(v.rows(), v.cols());
                    for (std::size_t r = 0; r < v.rows(); ++r)
                        for (std::size_t c = 0; c < v.cols(); ++c) g(r, c) = n.grad(r, c0 + c);
                    t.accumulate(id, g);
                }
                c0 += v.cols();
            }
        },
        [](const Tape& t, const Node& n) {
            DenseMatrix out(n.value.rows(), n.value.cols());
            std::size_t c0 = 0;
            for (auto id : n.inputs) {
                const auto& v = t.nodes_[id].value;
                if (auto* tp = t.tan(id)) {
                    for (std::size_t r = 0; r < v.rows(); ++r)
                        for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = (*tp)(r, c);
                }
                c0 += v.cols();
            }
            return out;
        });
}

Var Tape::mean_rows(Var x) {
    const auto& vx = value(x);
    require(vx.rows() > 0, "Tape::mean_rows: no rows");
    const double inv = 1.0 / static_cast<double>(vx.rows());
    DenseMatrix out(1, vx.cols());
    for (std::size_t r = 0; r < vx.rows(); ++r)
        for (std::size_t c = 0; c < vx.cols(); ++c) out(0, c) += vx(r, c);
    out *= inv;
    return push(
        std::move(out), {x.id},
        [inv](Tape& t, const Node& n) {
            const auto& src = t.nodes_[n.inputs[0]].value;
            DenseMatrix dx(src.rows(), src.cols());
            for (std::size_t r = 0; r < src.rows(); ++r)
                for (std::size_t c = 0; c < src.cols(); ++c) dx(r, c) = n.grad(0, c) * inv;
            t.accumulate(n.inputs[0], dx);
        },
        [inv](const Tape& t, const Node& n) {
            const auto& tx = *t.tan(n.inputs[0]);
            DenseMatrix out(1, tx.cols());
            for (std::size_t r = 0; r < tx.rows(); ++r)
                for (std::size_t c = 0; c < tx.cols(); ++c) out(0, c) += tx(r, c);
            return out * inv;
        });
}

Var Tape::im2col_tokens(Var x, std::size_t k) {
    require(k % 2 == 1, "Tape::im2col_tokens: kernel width must be odd");
    const auto& vx = value(x);
    const std::size_t n = vx.rows();
    const std::size_t c = vx.cols();
    const std::size_t half = k / 2;
    // Padding reads come from an appended zero; gather handles both sweeps.
    std::vector<std::uint32_t> idx;
    idx.reserve(n * k * c);
    bool padded = false;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t tap = 0; tap < k; ++tap) {
            const auto src = static_cast<std::ptrdiff_t>(r + tap) - static_cast<std::ptrdiff_t>(half);
            for (std::size_t ch = 0; ch < c; ++ch) {
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) {
                    idx.push_back(static_cast<std::uint32_t>(n * c));
                    padded = true;
                } else {
                    idx.push_back(static_cast<std::uint32_t>(static_cast<std::size_t>(src) * c + ch));
                }
            }
        }
    }
    Var source = x;
    if (padded) {
        const Var zero_row = constant(DenseMatrix(1, c));
        const Var parts[] = {x, zero_row};
        source = concat_rows(parts);
    }
    return gather(source, std::move(idx), n, k * c);
}

Var Tape::cross_entropy(Var logits, std::size_t label) {
    const auto& z = value(logits);
    require(z.rows() == 1, "Tape::cross_entropy: logits must be a single row");
    require(label < z.cols(), "Tape::cross_entropy: label out of range");
    DenseMatrix p = vcl::softmax_rows(z);
    double mx = z(0, 0);
    for (double v : z.data()) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z.data()) s += std::exp(v - mx);
    const double loss = mx + std::log(s) - z(0, label);
    DenseMatrix dlogit = p;
    dlogit(0, label) -= 1.0;
    return push(
        DenseMatrix(1, 1, loss), {logits.id},
        [dlogit](Tape& t, const Node& n) { t.accumulate(n.inputs[0], dlogit * n.grad(0, 0)); },
        [dlogit](const Tape& t, const Node& n) {
            return DenseMatrix(1, 1, dot(dlogit.data(), t.tan(n.inputs[0])->data()));
        });
}

}  // namespace vcl::ad
