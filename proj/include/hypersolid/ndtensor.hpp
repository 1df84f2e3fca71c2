#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "hypersolid/errors.hpp"

namespace hypersolid::nd {

using Index = std::size_t;

// Default guard for row normalization; zero rows stay zero instead of NaN.
inline constexpr double kNormalizeEps = 1e-12;

Index shape_numel(const std::vector<Index>& shape);

// Dense row-major array of doubles. Rank 0 is a scalar (numel 1).
struct Array {
    std::vector<Index> shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(std::vector<Index> s);
    Array(std::vector<Index> s, std::vector<double> d);

    static Array zeros(std::vector<Index> s) { return Array(std::move(s)); }
    static Array full(std::vector<Index> s, double v);
    static Array scalar(double v);

    Index numel() const { return data.size(); }
    Index rank() const { return shape.size(); }
    Index dim(Index i) const { return shape[i]; }
    Index rows() const;
    Index cols() const;

    double& operator()(Index i) { return data[i]; }
    double operator()(Index i) const { return data[i]; }
    double& operator()(Index i, Index j) { return data[i * shape[1] + j]; }
    double operator()(Index i, Index j) const { return data[i * shape[1] + j]; }
    double& operator()(Index i, Index j, Index k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(Index i, Index j, Index k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double item() const;

    bool same_shape(const Array& o) const { return shape == o.shape; }
    bool all_finite() const;
};

// Tape-free kernels shared by tape ops and by analysis code that does not
// need gradients.
namespace kernels {

// C = A * B for 2-D arrays; row-parallel, bitwise deterministic for any
// thread count (each output row is produced by exactly one thread with a
// fixed accumulation order).
Array matmul(const Array& a, const Array& b);
Array transpose(const Array& a);

// cos(a, b) computed as dot / sqrt(na2 * nb2). For bitwise-identical inputs
// this returns exactly 1.0 (sqrt(x*x) == x in IEEE-754). Zero vectors give 0.
double cosine(const double* a, const double* b, Index n);

// Normalize over the last axis; norms (if given) receives the raw row norms.
Array rowwise_l2_normalize(const Array& a, double eps, std::vector<double>* norms = nullptr);

// Catmull-Rom bicubic resize of a 2-D array.
Array resize_bicubic(const Array& a, Index out_h, Index out_w);

// Circular shift of a 2-D array by (dy, dx).
Array roll2d(const Array& a, std::int64_t dy, std::int64_t dx);

// Gaussian blur with a (2r+1)x(2r+1) kernel, edge-renormalized.
Array gaussian_blur2d(const Array& a, double sigma, Index radius);

} // namespace kernels

class Tape;
using NodeId = std::size_t;

struct Node {
    const char* op = "";
    std::vector<NodeId> inputs;
    Array value;
    Array grad;       // allocated lazily during backward
    bool stop = false;
    bool seen = false; // adjoint reached this node in the current backward pass
    std::function<void(Tape&, Node&)> backward;
    // op-specific saved state
    std::vector<Index> saved_idx;
    std::vector<double> saved_val;
    Array saved_arr;
};

// Reverse-mode differentiation record. Single-owner, single-threaded;
// backward visits nodes in strict reverse insertion order.
class Tape {
public:
    NodeId leaf(Array value, const char* name = "leaf");

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId reshape(NodeId a, std::vector<Index> shape);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId affine(NodeId a, double scale, double shift);
    NodeId scale(NodeId a, double c) { return affine(a, c, 0.0); }
    NodeId mul_const(NodeId a, Array factor);
    NodeId add_rowvec(NodeId a, NodeId bias);
    NodeId relu(NodeId a);
    NodeId tanh_act(NodeId a);
    NodeId rowwise_l2_normalize(NodeId a, double eps = kNormalizeEps);
    NodeId l2_norm_rows(NodeId a);
    NodeId max_over_axis(NodeId a, Index axis);
    NodeId sum_over_axis(NodeId a, Index axis);
    NodeId repeat_axis(NodeId a, Index axis, Index copies);
    NodeId mean_all(NodeId a);
    NodeId sum_all(NodeId a);
    NodeId stop_gradient(NodeId a);
    NodeId tv2d(NodeId a);
    NodeId roll2d(NodeId a, std::int64_t dy, std::int64_t dx);
    NodeId upsample_bicubic2d(NodeId a, Index out_h, Index out_w);
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    const Array& value(NodeId id) const { return nodes_[id].value; }
    // Valid after backward(); zeros for nodes the adjoint never reached.
    const Array& grad(NodeId id);
    void backward(NodeId root);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }

private:
    friend struct Node;
    NodeId push(Node n);
    Node& at(NodeId id) { return nodes_[id]; }
    void accumulate(NodeId id, const std::vector<double>& g);
    Array& grad_buffer(NodeId id); // allocates zeros on first touch

    std::vector<Node> nodes_;

    // op implementations reach back into the tape
    friend void detail_backward_entry(Tape&, Node&);
};

} // namespace hypersolid::nd
