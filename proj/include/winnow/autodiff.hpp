#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "winnow/types.hpp"

namespace winnow::ad {

// Handle to a node on a Tape.
struct Value {
    std::size_t id = 0;
};

// Reverse-mode tape over dense row-major matrices. Nodes are appended in
// evaluation order, which is already a topological order, so the backward
// sweep is a single reverse pass. Every op validates shapes and rejects
// non-finite results.
//
// backward() may be called repeatedly; each call computes a full adjoint
// pass in scratch storage and adds it into the persistent accumulators, so
// two calls yield exactly twice the gradient.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. Both are recorded identically; "constant" only signals intent.
    Value input(Mat v);
    Value constant(Mat v);

    Value matmul(Value a, Value b);
    // Same-shape addition, or broadcast of a 1 x n bias row over every row of a.
    Value add(Value a, Value b);
    // Elementwise product, same shapes.
    Value mul(Value a, Value b);
    Value relu(Value a);
    Value sigmoid(Value a);
    Value log(Value a);
    Value exp(Value a);
    Value scale(Value a, double c);
    Value sum(Value a);
    // Mean over rows of -log softmax(row)[label]. Returns a 1x1 scalar.
    Value softmax_cross_entropy(Value logits, const std::vector<int>& labels);
    // Stretched-and-clamped concrete gate with the noise logits fixed:
    //   s = sigmoid((noise + alpha) / beta), out = clamp(s*(hi-lo)+lo, 0, 1).
    // Differentiable in alpha wherever the pre-clamp value is interior.
    Value hard_concrete(Value alpha, const Mat& noise_logits, double beta, double lo, double hi);

    const Mat& value(Value v) const { return nodes_[v.id].value; }
    const Mat& gradient(Value v) const { return nodes_[v.id].grad; }

    void backward(Value root);
    void clear_gradients();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(const Mat& adj, std::vector<Mat>& local)> backprop;
    };

    Value push(Mat value, std::function<void(const Mat&, std::vector<Mat>&)> backprop);
    static void accumulate(std::vector<Mat>& local, std::size_t id, const Mat& contribution);

    std::vector<Node> nodes_;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares backward() against central differences for a scalar-valued
// expression of one matrix input. `build` must record the same expression on
// any tape it is given. Relative error uses a small absolute floor so exact
// zeros on both sides compare clean.
GradCheckReport finite_diff_check(const std::function<Value(Tape&, Value)>& build,
                                  const Mat& point, double step, double tolerance);

}  // namespace winnow::ad
