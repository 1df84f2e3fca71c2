#include "hypersolid/ndtensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hypersolid::nd {

Index shape_numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

Array::Array(std::vector<Index> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Array::Array(std::vector<Index> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) {
        throw DimensionError("array data size does not match shape");
    }
}

Array Array::full(std::vector<Index> s, double v) {
    Array a(std::move(s));
    std::fill(a.data.begin(), a.data.end(), v);
    return a;
}

Array Array::scalar(double v) {
    Array a;
    a.data.assign(1, v);
    return a;
}

Index Array::rows() const {
    if (rank() != 2) throw DimensionError("rows() requires a rank-2 array");
    return shape[0];
}

Index Array::cols() const {
    if (rank() != 2) throw DimensionError("cols() requires a rank-2 array");
    return shape[1];
}

double Array::item() const {
    if (numel() != 1) throw DimensionError("item() requires a single-element array");
    return data[0];
}

bool Array::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

namespace kernels {

static void matmul_into(const double* a, const double* b, double* c, Index m, Index k, Index n) {
    std::fill(c, c + m * n, 0.0);
#pragma omp parallel for schedule(static) if (m >= 16)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        double* crow = c + static_cast<Index>(i) * n;
        const double* arow = a + static_cast<Index>(i) * k;
        for (Index p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Array matmul(const Array& a, const Array& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul requires rank-2 arrays");
    if (a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul inner dimensions do not match: " + std::to_string(a.shape[1]) +
                             " vs " + std::to_string(b.shape[0]));
    }
    Array out({a.shape[0], b.shape[1]});
    matmul_into(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1], b.shape[1]);
    return out;
}

Array transpose(const Array& a) {
    if (a.rank() != 2) throw DimensionError("transpose requires a rank-2 array");
    Array out({a.shape[1], a.shape[0]});
    for (Index i = 0; i < a.shape[0]; ++i)
        for (Index j = 0; j < a.shape[1]; ++j) out(j, i) = a(i, j);
    return out;
}

double cosine(const double* a, const double* b, Index n) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) return 0.0;
    return dot / std::sqrt(na2 * nb2);
}

Array rowwise_l2_normalize(const Array& a, double eps, std::vector<double>* norms) {
    if (a.rank() < 1) throw DimensionError("normalize requires rank >= 1");
    const Index d = a.shape.back();
    const Index rows = a.numel() / std::max<Index>(d, 1);
    Array out(a.shape);
    if (norms) norms->assign(rows, 0.0);
    for (Index r = 0; r < rows; ++r) {
        const double* x = a.data.data() + r * d;
        double* y = out.data.data() + r * d;
        double s = 0.0;
        for (Index i = 0; i < d; ++i) s += x[i] * x[i];
        const double norm = std::sqrt(s);
        if (norms) (*norms)[r] = norm;
        const double div = std::max(norm, eps);
        for (Index i = 0; i < d; ++i) y[i] = x[i] / div;
    }
    return out;
}

// Catmull-Rom weights (a = -0.5), clamped source indexing.
static double cubic_w(double t) {
    const double a = -0.5;
    const double at = std::abs(t);
    if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
    if (at < 2.0) return (((at - 5.0) * at + 8.0) * at - 4.0) * a;
    return 0.0;
}

// Shared by the kernel and the tape op: enumerate the 4 taps per output
// coordinate along one axis.
static void cubic_taps(Index in, Index out, Index coord, Index idx[4], double w[4]) {
    const double src = (static_cast<double>(coord) + 0.5) * static_cast<double>(in) /
                           static_cast<double>(out) -
                       0.5;
    const double base = std::floor(src);
    for (int k = 0; k < 4; ++k) {
        const double pos = base - 1.0 + k;
        w[k] = cubic_w(src - pos);
        double clamped = pos;
        if (clamped < 0.0) clamped = 0.0;
        if (clamped > static_cast<double>(in - 1)) clamped = static_cast<double>(in - 1);
        idx[k] = static_cast<Index>(clamped);
    }
}

Array resize_bicubic(const Array& a, Index out_h, Index out_w) {
    if (a.rank() != 2) throw DimensionError("resize_bicubic requires a rank-2 array");
    if (out_h == 0 || out_w == 0) throw DimensionError("resize_bicubic output dims must be positive");
    const Index in_h = a.shape[0], in_w = a.shape[1];
    Array out({out_h, out_w});
    for (Index i = 0; i < out_h; ++i) {
        Index yi[4];
        double wy[4];
        cubic_taps(in_h, out_h, i, yi, wy);
        for (Index j = 0; j < out_w; ++j) {
            Index xi[4];
            double wx[4];
            cubic_taps(in_w, out_w, j, xi, wx);
            double acc = 0.0;
            for (int ky = 0; ky < 4; ++ky)
                for (int kx = 0; kx < 4; ++kx) acc += wy[ky] * wx[kx] * a(yi[ky], xi[kx]);
            out(i, j) = acc;
        }
    }
    return out;
}

Array roll2d(const Array& a, std::int64_t dy, std::int64_t dx) {
    if (a.rank() != 2) throw DimensionError("roll2d requires a rank-2 array");
    const std::int64_t h = static_cast<std::int64_t>(a.shape[0]);
    const std::int64_t w = static_cast<std::int64_t>(a.shape[1]);
    Array out(a.shape);
    for (std::int64_t i = 0; i < h; ++i) {
        const std::int64_t si = ((i - dy) % h + h) % h;
        for (std::int64_t j = 0; j < w; ++j) {
            const std::int64_t sj = ((j - dx) % w + w) % w;
            out(static_cast<Index>(i), static_cast<Index>(j)) =
                a(static_cast<Index>(si), static_cast<Index>(sj));
        }
    }
    return out;
}

Array gaussian_blur2d(const Array& a, double sigma, Index radius) {
    if (a.rank() != 2) throw DimensionError("gaussian_blur2d requires a rank-2 array");
    const std::int64_t r = static_cast<std::int64_t>(radius);
    std::vector<double> k(2 * radius + 1);
    for (std::int64_t i = -r; i <= r; ++i)
        k[static_cast<Index>(i + r)] = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
    const std::int64_t h = static_cast<std::int64_t>(a.shape[0]);
    const std::int64_t w = static_cast<std::int64_t>(a.shape[1]);
    Array out(a.shape);
    for (std::int64_t i = 0; i < h; ++i) {
        for (std::int64_t j = 0; j < w; ++j) {
            double acc = 0.0, wsum = 0.0;
            for (std::int64_t dy = -r; dy <= r; ++dy) {
                const std::int64_t y = i + dy;
                if (y < 0 || y >= h) continue;
                for (std::int64_t dx = -r; dx <= r; ++dx) {
                    const std::int64_t x = j + dx;
                    if (x < 0 || x >= w) continue;
                    const double wk = k[static_cast<Index>(dy + r)] * k[static_cast<Index>(dx + r)];
                    acc += wk * a(static_cast<Index>(y), static_cast<Index>(x));
                    wsum += wk;
                }
            }
            out(static_cast<Index>(i), static_cast<Index>(j)) = acc / wsum;
        }
    }
    return out;
}

} // namespace kernels

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Array& Tape::grad_buffer(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.data.size() != n.value.data.size()) {
        n.grad = Array(n.value.shape);
    }
    return n.grad;
}

void Tape::accumulate(NodeId id, const std::vector<double>& g) {
    Array& buf = grad_buffer(id);
    for (Index i = 0; i < g.size(); ++i) buf.data[i] += g[i];
    nodes_[id].seen = true;
}

const Array& Tape::grad(NodeId id) {
    return grad_buffer(id);
}

void Tape::backward(NodeId root) {
    if (root >= nodes_.size()) throw ArgumentError("backward: node id out of range");
    if (nodes_[root].value.numel() != 1) {
        throw ArgumentError("backward root must be a scalar");
    }
    for (Node& n : nodes_) {
        n.seen = false;
        if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    grad_buffer(root).data[0] = 1.0;
    nodes_[root].seen = true;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.seen && n.backward && !n.stop) n.backward(*this, n);
    }
}

NodeId Tape::leaf(Array value, const char* name) {
    Node n;
    n.op = name;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    Node n;
    n.op = "matmul";
    n.inputs = {a, b};
    n.value = kernels::matmul(av, bv);
    n.backward = [](Tape& t, Node& self) {
        const Array& g = self.grad;
        const Array& av = t.value(self.inputs[0]);
        const Array& bv = t.value(self.inputs[1]);
        Array ga = kernels::matmul(g, kernels::transpose(bv));
        Array gb = kernels::matmul(kernels::transpose(av), g);
        t.accumulate(self.inputs[0], ga.data);
        t.accumulate(self.inputs[1], gb.data);
    };
    return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
    Node n;
    n.op = "transpose";
    n.inputs = {a};
    n.value = kernels::transpose(value(a));
    n.backward = [](Tape& t, Node& self) {
        Array g = kernels::transpose(self.grad);
        t.accumulate(self.inputs[0], g.data);
    };
    return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::vector<Index> shape) {
    const Array& av = value(a);
    if (shape_numel(shape) != av.numel()) throw DimensionError("reshape element count mismatch");
    Node n;
    n.op = "reshape";
    n.inputs = {a};
    n.value = Array(std::move(shape), av.data);
    n.backward = [](Tape& t, Node& self) { t.accumulate(self.inputs[0], self.grad.data); };
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("add shape mismatch");
    Node n;
    n.op = "add";
    n.inputs = {a, b};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = av.data[i] + bv.data[i];
    n.backward = [](Tape& t, Node& self) {
        t.accumulate(self.inputs[0], self.grad.data);
        t.accumulate(self.inputs[1], self.grad.data);
    };
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("sub shape mismatch");
    Node n;
    n.op = "sub";
    n.inputs = {a, b};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = av.data[i] - bv.data[i];
    n.backward = [](Tape& t, Node& self) {
        t.accumulate(self.inputs[0], self.grad.data);
        std::vector<double> neg(self.grad.data.size());
        for (Index i = 0; i < neg.size(); ++i) neg[i] = -self.grad.data[i];
        t.accumulate(self.inputs[1], neg);
    };
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("mul shape mismatch");
    Node n;
    n.op = "mul";
    n.inputs = {a, b};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = av.data[i] * bv.data[i];
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Array& bv = t.value(self.inputs[1]);
        std::vector<double> g(self.grad.data.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = self.grad.data[i] * bv.data[i];
        t.accumulate(self.inputs[0], g);
        for (Index i = 0; i < g.size(); ++i) g[i] = self.grad.data[i] * av.data[i];
        t.accumulate(self.inputs[1], g);
    };
    return push(std::move(n));
}

NodeId Tape::affine(NodeId a, double scale, double shift) {
    const Array& av = value(a);
    Node n;
    n.op = "affine";
    n.inputs = {a};
    n.saved_val = {scale};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = scale * av.data[i] + shift;
    n.backward = [](Tape& t, Node& self) {
        const double s = self.saved_val[0];
        std::vector<double> g(self.grad.data.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = s * self.grad.data[i];
        t.accumulate(self.inputs[0], g);
    };
    return push(std::move(n));
}

NodeId Tape::mul_const(NodeId a, Array factor) {
    const Array& av = value(a);
    if (!av.same_shape(factor)) throw DimensionError("mul_const shape mismatch");
    Node n;
    n.op = "mul_const";
    n.inputs = {a};
    n.saved_arr = std::move(factor);
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = av.data[i] * n.saved_arr.data[i];
    n.backward = [](Tape& t, Node& self) {
        std::vector<double> g(self.grad.data.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = self.grad.data[i] * self.saved_arr.data[i];
        t.accumulate(self.inputs[0], g);
    };
    return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
    const Array& av = value(a);
    const Array& bv = value(bias);
    if (av.rank() != 2 || bv.rank() != 1 || av.shape[1] != bv.shape[0]) {
        throw DimensionError("add_rowvec expects (n,m) plus (m)");
    }
    Node n;
    n.op = "add_rowvec";
    n.inputs = {a, bias};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.shape[0]; ++i)
        for (Index j = 0; j < av.shape[1]; ++j) n.value(i, j) = av(i, j) + bv(j);
    n.backward = [](Tape& t, Node& self) {
        const Array& g = self.grad;
        t.accumulate(self.inputs[0], g.data);
        std::vector<double> gb(g.shape[1], 0.0);
        for (Index i = 0; i < g.shape[0]; ++i)
            for (Index j = 0; j < g.shape[1]; ++j) gb[j] += g(i, j);
        t.accumulate(self.inputs[1], gb);
    };
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    const Array& av = value(a);
    Node n;
    n.op = "relu";
    n.inputs = {a};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = av.data[i] > 0.0 ? av.data[i] : 0.0;
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        std::vector<double> g(self.grad.data.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = av.data[i] > 0.0 ? self.grad.data[i] : 0.0;
        t.accumulate(self.inputs[0], g);
    };
    return push(std::move(n));
}

NodeId Tape::tanh_act(NodeId a) {
    const Array& av = value(a);
    Node n;
    n.op = "tanh";
    n.inputs = {a};
    n.value = Array(av.shape);
    for (Index i = 0; i < av.numel(); ++i) n.value.data[i] = std::tanh(av.data[i]);
    n.backward = [](Tape& t, Node& self) {
        std::vector<double> g(self.grad.data.size());
        for (Index i = 0; i < g.size(); ++i) {
            const double y = self.value.data[i];
            g[i] = self.grad.data[i] * (1.0 - y * y);
        }
        t.accumulate(self.inputs[0], g);
    };
    return push(std::move(n));
}

NodeId Tape::rowwise_l2_normalize(NodeId a, double eps) {
    if (eps <= 0.0) throw ArgumentError("normalize eps must be positive");
    const Array& av = value(a);
    Node n;
    n.op = "rowwise_l2_normalize";
    n.inputs = {a};
    n.value = kernels::rowwise_l2_normalize(av, eps, &n.saved_val);
    n.saved_val.push_back(eps);
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index d = av.shape.back();
        const Index rows = av.numel() / d;
        const double eps = self.saved_val[rows];
        std::vector<double> gx(av.numel(), 0.0);
        for (Index r = 0; r < rows; ++r) {
            const double* x = av.data.data() + r * d;
            const double* g = self.grad.data.data() + r * d;
            double* out = gx.data() + r * d;
            const double norm = self.saved_val[r];
            if (norm > eps) {
                double xg = 0.0;
                for (Index i = 0; i < d; ++i) xg += x[i] * g[i];
                const double inv = 1.0 / norm;
                const double inv3 = inv * inv * inv;
                for (Index i = 0; i < d; ++i) out[i] = g[i] * inv - x[i] * xg * inv3;
            } else {
                // max(norm, eps) pinned at eps: divisor is constant
                for (Index i = 0; i < d; ++i) out[i] = g[i] / eps;
            }
        }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::l2_norm_rows(NodeId a) {
    const Array& av = value(a);
    if (av.rank() < 1) throw DimensionError("l2_norm_rows requires rank >= 1");
    const Index d = av.shape.back();
    const Index rows = av.numel() / d;
    Node n;
    n.op = "l2_norm_rows";
    n.inputs = {a};
    std::vector<Index> out_shape(av.shape.begin(), av.shape.end() - 1);
    n.value = Array(std::move(out_shape));
    for (Index r = 0; r < rows; ++r) {
        const double* x = av.data.data() + r * d;
        double s = 0.0;
        for (Index i = 0; i < d; ++i) s += x[i] * x[i];
        n.value.data[r] = std::sqrt(s);
    }
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index d = av.shape.back();
        const Index rows = av.numel() / d;
        std::vector<double> gx(av.numel(), 0.0);
        for (Index r = 0; r < rows; ++r) {
            const double norm = self.value.data[r];
            if (norm == 0.0) continue; // subgradient 0 at the kink
            const double g = self.grad.data[r] / norm;
            const double* x = av.data.data() + r * d;
            double* out = gx.data() + r * d;
            for (Index i = 0; i < d; ++i) out[i] = g * x[i];
        }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

namespace {

struct AxisSplit {
    Index outer, axis, inner;
};

AxisSplit split_axis(const std::vector<Index>& shape, Index axis) {
    if (axis >= shape.size()) throw DimensionError("axis out of range");
    AxisSplit s{1, shape[axis], 1};
    for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
    for (Index i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace

NodeId Tape::max_over_axis(NodeId a, Index axis) {
    const Array& av = value(a);
    const AxisSplit sp = split_axis(av.shape, axis);
    Node n;
    n.op = "max_over_axis";
    n.inputs = {a};
    std::vector<Index> out_shape;
    for (Index i = 0; i < av.shape.size(); ++i)
        if (i != axis) out_shape.push_back(av.shape[i]);
    n.value = Array(std::move(out_shape));
    n.saved_idx.resize(n.value.numel());
    for (Index o = 0; o < sp.outer; ++o) {
        for (Index in = 0; in < sp.inner; ++in) {
            Index best_k = 0;
            double best = av.data[(o * sp.axis + 0) * sp.inner + in];
            for (Index k = 1; k < sp.axis; ++k) {
                const double v = av.data[(o * sp.axis + k) * sp.inner + in];
                if (v > best) { // strict: ties keep the lowest index
                    best = v;
                    best_k = k;
                }
            }
            n.value.data[o * sp.inner + in] = best;
            n.saved_idx[o * sp.inner + in] = best_k;
        }
    }
    n.saved_idx.push_back(axis);
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index axis = self.saved_idx.back();
        const AxisSplit sp = split_axis(av.shape, axis);
        std::vector<double> gx(av.numel(), 0.0);
        for (Index o = 0; o < sp.outer; ++o) {
            for (Index in = 0; in < sp.inner; ++in) {
                const Index k = self.saved_idx[o * sp.inner + in];
                gx[(o * sp.axis + k) * sp.inner + in] = self.grad.data[o * sp.inner + in];
            }
        }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::sum_over_axis(NodeId a, Index axis) {
    const Array& av = value(a);
    const AxisSplit sp = split_axis(av.shape, axis);
    Node n;
    n.op = "sum_over_axis";
    n.inputs = {a};
    std::vector<Index> out_shape;
    for (Index i = 0; i < av.shape.size(); ++i)
        if (i != axis) out_shape.push_back(av.shape[i]);
    n.value = Array(std::move(out_shape));
    for (Index o = 0; o < sp.outer; ++o)
        for (Index k = 0; k < sp.axis; ++k)
            for (Index in = 0; in < sp.inner; ++in)
                n.value.data[o * sp.inner + in] += av.data[(o * sp.axis + k) * sp.inner + in];
    n.saved_idx = {axis};
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index axis = self.saved_idx[0];
        const AxisSplit sp = split_axis(av.shape, axis);
        std::vector<double> gx(av.numel());
        for (Index o = 0; o < sp.outer; ++o)
            for (Index k = 0; k < sp.axis; ++k)
                for (Index in = 0; in < sp.inner; ++in)
                    gx[(o * sp.axis + k) * sp.inner + in] = self.grad.data[o * sp.inner + in];
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::repeat_axis(NodeId a, Index axis, Index copies) {
    const Array& av = value(a);
    if (axis > av.rank()) throw DimensionError("repeat_axis position out of range");
    if (copies == 0) throw DimensionError("repeat_axis needs at least one copy");
    Index outer = 1, inner = 1;
    for (Index i = 0; i < axis; ++i) outer *= av.shape[i];
    for (Index i = axis; i < av.rank(); ++i) inner *= av.shape[i];
    Node n;
    n.op = "repeat_axis";
    n.inputs = {a};
    std::vector<Index> out_shape(av.shape.begin(), av.shape.begin() + axis);
    out_shape.push_back(copies);
    out_shape.insert(out_shape.end(), av.shape.begin() + axis, av.shape.end());
    n.value = Array(std::move(out_shape));
    for (Index o = 0; o < outer; ++o)
        for (Index c = 0; c < copies; ++c)
            for (Index i = 0; i < inner; ++i)
                n.value.data[(o * copies + c) * inner + i] = av.data[o * inner + i];
    n.saved_idx = {axis, copies};
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index axis = self.saved_idx[0];
        const Index copies = self.saved_idx[1];
        Index outer = 1, inner = 1;
        for (Index i = 0; i < axis; ++i) outer *= av.shape[i];
        for (Index i = axis; i < av.rank(); ++i) inner *= av.shape[i];
        std::vector<double> gx(av.numel(), 0.0);
        for (Index o = 0; o < outer; ++o)
            for (Index c = 0; c < copies; ++c)
                for (Index i = 0; i < inner; ++i)
                    gx[o * inner + i] += self.grad.data[(o * copies + c) * inner + i];
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::mean_all(NodeId a) {
    const Array& av = value(a);
    if (av.numel() == 0) throw DimensionError("mean of empty array");
    Node n;
    n.op = "mean_all";
    n.inputs = {a};
    double s = 0.0;
    for (double v : av.data) s += v;
    n.value = Array::scalar(s / static_cast<double>(av.numel()));
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const double g = self.grad.data[0] / static_cast<double>(av.numel());
        std::vector<double> gx(av.numel(), g);
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
    const Array& av = value(a);
    Node n;
    n.op = "sum_all";
    n.inputs = {a};
    double s = 0.0;
    for (double v : av.data) s += v;
    n.value = Array::scalar(s);
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        std::vector<double> gx(av.numel(), self.grad.data[0]);
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::stop_gradient(NodeId a) {
    Node n;
    n.op = "stop_gradient";
    n.inputs = {a};
    n.value = value(a);
    n.stop = true; // no backward: zero adjoint propagates upstream
    return push(std::move(n));
}

NodeId Tape::tv2d(NodeId a) {
    const Array& av = value(a);
    if (av.rank() != 2) throw DimensionError("tv2d requires a rank-2 array");
    Node n;
    n.op = "tv2d";
    n.inputs = {a};
    const Index h = av.shape[0], w = av.shape[1];
    double s = 0.0;
    for (Index i = 0; i + 1 < h; ++i)
        for (Index j = 0; j < w; ++j) s += std::abs(av(i + 1, j) - av(i, j));
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j + 1 < w; ++j) s += std::abs(av(i, j + 1) - av(i, j));
    n.value = Array::scalar(s);
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index h = av.shape[0], w = av.shape[1];
        const double g = self.grad.data[0];
        std::vector<double> gx(av.numel(), 0.0);
        auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        for (Index i = 0; i + 1 < h; ++i)
            for (Index j = 0; j < w; ++j) {
                const double s = sgn(av(i + 1, j) - av(i, j)) * g;
                gx[(i + 1) * w + j] += s;
                gx[i * w + j] -= s;
            }
        for (Index i = 0; i < h; ++i)
            for (Index j = 0; j + 1 < w; ++j) {
                const double s = sgn(av(i, j + 1) - av(i, j)) * g;
                gx[i * w + j + 1] += s;
                gx[i * w + j] -= s;
            }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::roll2d(NodeId a, std::int64_t dy, std::int64_t dx) {
    Node n;
    n.op = "roll2d";
    n.inputs = {a};
    n.value = kernels::roll2d(value(a), dy, dx);
    n.saved_val = {static_cast<double>(dy), static_cast<double>(dx)};
    n.backward = [](Tape& t, Node& self) {
        const std::int64_t dy = static_cast<std::int64_t>(self.saved_val[0]);
        const std::int64_t dx = static_cast<std::int64_t>(self.saved_val[1]);
        Array g = kernels::roll2d(self.grad, -dy, -dx);
        t.accumulate(self.inputs[0], g.data);
    };
    return push(std::move(n));
}

NodeId Tape::upsample_bicubic2d(NodeId a, Index out_h, Index out_w) {
    const Array& av = value(a);
    Node n;
    n.op = "upsample_bicubic2d";
    n.inputs = {a};
    n.value = kernels::resize_bicubic(av, out_h, out_w);
    n.backward = [](Tape& t, Node& self) {
        const Array& av = t.value(self.inputs[0]);
        const Index in_h = av.shape[0], in_w = av.shape[1];
        const Index out_h = self.value.shape[0], out_w = self.value.shape[1];
        std::vector<double> gx(av.numel(), 0.0);
        for (Index i = 0; i < out_h; ++i) {
            Index yi[4];
            double wy[4];
            kernels::cubic_taps(in_h, out_h, i, yi, wy);
            for (Index j = 0; j < out_w; ++j) {
                Index xi[4];
                double wx[4];
                kernels::cubic_taps(in_w, out_w, j, xi, wx);
                const double g = self.grad(i, j);
                for (int ky = 0; ky < 4; ++ky)
                    for (int kx = 0; kx < 4; ++kx) gx[yi[ky] * in_w + xi[kx]] += wy[ky] * wx[kx] * g;
            }
        }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Array& lv = value(logits);
    if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy requires rank-2 logits");
    const Index n_rows = lv.shape[0], k = lv.shape[1];
    if (labels.size() != n_rows) throw DimensionError("labels count does not match logits rows");
    for (int y : labels)
        if (y < 0 || static_cast<Index>(y) >= k) throw ArgumentError("label out of class range");
    Node n;
    n.op = "softmax_cross_entropy";
    n.inputs = {logits};
    n.saved_arr = Array({n_rows, k}); // softmax probabilities
    double loss = 0.0;
    for (Index r = 0; r < n_rows; ++r) {
        const double* row = lv.data.data() + r * k;
        double m = row[0];
        for (Index j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (Index j = 0; j < k; ++j) z += std::exp(row[j] - m);
        const double logz = std::log(z) + m;
        loss += logz - row[static_cast<Index>(labels[r])];
        for (Index j = 0; j < k; ++j) n.saved_arr(r, j) = std::exp(row[j] - logz);
    }
    n.value = Array::scalar(loss / static_cast<double>(n_rows));
    n.saved_idx.assign(labels.begin(), labels.end());
    n.backward = [](Tape& t, Node& self) {
        const Index n_rows = self.saved_arr.shape[0], k = self.saved_arr.shape[1];
        const double g = self.grad.data[0] / static_cast<double>(n_rows);
        std::vector<double> gx(n_rows * k);
        for (Index r = 0; r < n_rows; ++r)
            for (Index j = 0; j < k; ++j) {
                double p = self.saved_arr(r, j);
                if (j == self.saved_idx[r]) p -= 1.0;
                gx[r * k + j] = g * p;
            }
        t.accumulate(self.inputs[0], gx);
    };
    return push(std::move(n));
}

} // namespace hypersolid::nd
