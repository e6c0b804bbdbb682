#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace winnow {

// All numeric state is carried by dense row-major double matrices.
// Vectors are 1 x n rows so that batches, parameters and single samples
// share one type.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Sentinel class index for rejected (out-of-domain) samples.
inline constexpr int kOodClass = -1;

inline std::string shape_str(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Mat& m, const char* where) {
    if (!m.allFinite()) {
        throw std::runtime_error(std::string(where) + ": non-finite values");
    }
}

// Numerically stable sigmoid.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Softmax of a logit row at temperature t, stabilized by max subtraction.
inline Mat softmax_row(const Mat& logits, double t = 1.0) {
    if (logits.rows() != 1) {
        throw std::invalid_argument("softmax_row: expected a 1xk row, got " + shape_str(logits));
    }
    if (t <= 0.0) {
        throw std::invalid_argument("softmax_row: temperature must be positive");
    }
    const double m = logits.maxCoeff();
    Mat e = ((logits.array() - m) / t).exp();
    return e / e.sum();
}

// log(sum(exp(x_i))) over a row, stabilized.
inline double logsumexp_row(const Mat& logits) {
    const double m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum());
}

inline int argmax_row(const Mat& row) {
    Eigen::Index idx = 0;
    row.row(0).maxCoeff(&idx);
    return static_cast<int>(idx);
}

}  // namespace winnow
