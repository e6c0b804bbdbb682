#include "winnow/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace winnow::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + shape_str(a) +
                                " vs " + shape_str(b) + ")");
}

}  // namespace

Value Tape::push(Mat value, std::function<void(const Mat&, std::vector<Mat>&)> backprop) {
    Node node;
    node.grad = Mat::Zero(value.rows(), value.cols());
    node.value = std::move(value);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Value{nodes_.size() - 1};
}

void Tape::accumulate(std::vector<Mat>& local, std::size_t id, const Mat& contribution) {
    if (local[id].size() == 0) {
        local[id] = contribution;
    } else {
        local[id] += contribution;
    }
}

Value Tape::input(Mat v) {
    require_finite(v, "input");
    return push(std::move(v), nullptr);
}

Value Tape::constant(Mat v) {
    require_finite(v, "constant");
    return push(std::move(v), nullptr);
}

Value Tape::matmul(Value a, Value b) {
    const Mat& va = nodes_[a.id].value;
    const Mat& vb = nodes_[b.id].value;
    if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
    Mat out = va * vb;
    require_finite(out, "matmul");
    return push(std::move(out), [this, a, b](const Mat& adj, std::vector<Mat>& local) {
        accumulate(local, a.id, adj * nodes_[b.id].value.transpose());
        accumulate(local, b.id, nodes_[a.id].value.transpose() * adj);
    });
}

Value Tape::add(Value a, Value b) {
    const Mat& va = nodes_[a.id].value;
    const Mat& vb = nodes_[b.id].value;
    if (va.rows() == vb.rows() && va.cols() == vb.cols()) {
        Mat out = va + vb;
        require_finite(out, "add");
        return push(std::move(out), [a, b](const Mat& adj, std::vector<Mat>& local) {
            accumulate(local, a.id, adj);
            accumulate(local, b.id, adj);
        });
    }
    if (vb.rows() == 1 && va.cols() == vb.cols()) {
        Mat out = va.rowwise() + vb.row(0);
        require_finite(out, "add");
        return push(std::move(out), [a, b](const Mat& adj, std::vector<Mat>& local) {
            accumulate(local, a.id, adj);
            accumulate(local, b.id, adj.colwise().sum());
        });
    }
    shape_error("add", va, vb);
}

Value Tape::mul(Value a, Value b) {
    const Mat& va = nodes_[a.id].value;
    const Mat& vb = nodes_[b.id].value;
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("mul", va, vb);
    Mat out = va.cwiseProduct(vb);
    require_finite(out, "mul");
    return push(std::move(out), [this, a, b](const Mat& adj, std::vector<Mat>& local) {
        accumulate(local, a.id, adj.cwiseProduct(nodes_[b.id].value));
        accumulate(local, b.id, adj.cwiseProduct(nodes_[a.id].value));
    });
}

Value Tape::relu(Value a) {
    const Mat& va = nodes_[a.id].value;
    Mat out = va.cwiseMax(0.0);
    return push(std::move(out), [this, a](const Mat& adj, std::vector<Mat>& local) {
        // Subgradient 0 at exactly 0.
        Mat g = (nodes_[a.id].value.array() > 0.0).cast<double>() * adj.array();
        accumulate(local, a.id, g);
    });
}

Value Tape::sigmoid(Value a) {
    const Mat& va = nodes_[a.id].value;
    Mat out = va.unaryExpr([](double x) { return winnow::sigmoid(x); });
    Value v = push(std::move(out), nullptr);
    nodes_[v.id].backprop = [this, a, v](const Mat& adj, std::vector<Mat>& local) {
        const Mat& y = nodes_[v.id].value;
        Mat g = adj.array() * y.array() * (1.0 - y.array());
        accumulate(local, a.id, g);
    };
    return v;
}

Value Tape::log(Value a) {
    const Mat& va = nodes_[a.id].value;
    if ((va.array() <= 0.0).any()) {
        throw std::invalid_argument("log: non-positive input");
    }
    Mat out = va.array().log();
    require_finite(out, "log");
    return push(std::move(out), [this, a](const Mat& adj, std::vector<Mat>& local) {
        Mat g = adj.array() / nodes_[a.id].value.array();
        accumulate(local, a.id, g);
    });
}

Value Tape::exp(Value a) {
    Mat out = nodes_[a.id].value.array().exp();
    require_finite(out, "exp");
    Value v = push(std::move(out), nullptr);
    nodes_[v.id].backprop = [this, a, v](const Mat& adj, std::vector<Mat>& local) {
        Mat g = adj.array() * nodes_[v.id].value.array();
        accumulate(local, a.id, g);
    };
    return v;
}

Value Tape::scale(Value a, double c) {
    Mat out = nodes_[a.id].value * c;
    require_finite(out, "scale");
    return push(std::move(out), [a, c](const Mat& adj, std::vector<Mat>& local) {
        accumulate(local, a.id, adj * c);
    });
}

Value Tape::sum(Value a) {
    Mat out(1, 1);
    out(0, 0) = nodes_[a.id].value.sum();
    require_finite(out, "sum");
    return push(std::move(out), [this, a](const Mat& adj, std::vector<Mat>& local) {
        const Mat& va = nodes_[a.id].value;
        accumulate(local, a.id, Mat::Constant(va.rows(), va.cols(), adj(0, 0)));
    });
}

Value Tape::softmax_cross_entropy(Value logits, const std::vector<int>& labels) {
    const Mat& phi = nodes_[logits.id].value;
    const auto n = phi.rows();
    const auto k = phi.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + shape_str(phi) + " logits");
    }
    for (int y : labels) {
        if (y < 0 || y >= k) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(k) + ")");
        }
    }
    Mat probs(n, k);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = phi.row(i).maxCoeff();
        Mat e = (phi.row(i).array() - m).exp();
        const double z = e.sum();
        probs.row(i) = e / z;
        total += std::log(z) - (phi(i, labels[static_cast<std::size_t>(i)]) - m);
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(n);
    require_finite(out, "softmax_cross_entropy");
    return push(std::move(out),
                [logits, labels, probs, n](const Mat& adj, std::vector<Mat>& local) {
                    Mat g = probs;
                    for (Eigen::Index i = 0; i < n; ++i) {
                        g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                    }
                    g *= adj(0, 0) / static_cast<double>(n);
                    accumulate(local, logits.id, g);
                });
}

Value Tape::hard_concrete(Value alpha, const Mat& noise_logits, double beta, double lo,
                          double hi) {
    const Mat& va = nodes_[alpha.id].value;
    if (va.rows() != noise_logits.rows() || va.cols() != noise_logits.cols()) {
        shape_error("hard_concrete", va, noise_logits);
    }
    if (beta <= 0.0) {
        throw std::invalid_argument("hard_concrete: beta must be positive");
    }
    Mat s = ((noise_logits + va) / beta).unaryExpr([](double x) { return winnow::sigmoid(x); });
    Mat pre = s.array() * (hi - lo) + lo;
    Mat out = pre.cwiseMax(0.0).cwiseMin(1.0);
    return push(std::move(out),
                [alpha, s, pre, beta, lo, hi](const Mat& adj, std::vector<Mat>& local) {
                    Mat interior =
                        ((pre.array() > 0.0) && (pre.array() < 1.0)).cast<double>();
                    Mat g = adj.array() * interior.array() * s.array() * (1.0 - s.array()) *
                            ((hi - lo) / beta);
                    accumulate(local, alpha.id, g);
                });
}

void Tape::backward(Value root) {
    const Mat& out = nodes_[root.id].value;
    if (out.rows() != 1 || out.cols() != 1) {
        throw std::invalid_argument("backward: output must be scalar, got " + shape_str(out));
    }
    std::vector<Mat> local(nodes_.size());
    local[root.id] = Mat::Ones(1, 1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
        if (local[i].size() == 0 || !nodes_[i].backprop) continue;
        nodes_[i].backprop(local[i], local);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (local[i].size() != 0) nodes_[i].grad += local[i];
    }
}

void Tape::clear_gradients() {
    for (auto& node : nodes_) node.grad.setZero();
}

GradCheckReport finite_diff_check(const std::function<Value(Tape&, Value)>& build,
                                  const Mat& point, double step, double tolerance) {
    Tape tape;
    Value x = tape.input(point);
    Value y = build(tape, x);
    tape.backward(y);
    const Mat analytic = tape.gradient(x);

    GradCheckReport report;
    report.pass = true;
    for (Eigen::Index i = 0; i < point.rows(); ++i) {
        for (Eigen::Index j = 0; j < point.cols(); ++j) {
            Mat plus = point;
            Mat minus = point;
            plus(i, j) += step;
            minus(i, j) -= step;
            Tape tp;
            Tape tm;
            const double fp = tp.value(build(tp, tp.input(plus)))(0, 0);
            const double fm = tm.value(build(tm, tm.input(minus)))(0, 0);
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic(i, j);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_row = i;
                report.worst_col = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace winnow::ad
