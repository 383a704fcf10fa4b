#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace fdnz {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

// Dense row-major f64 tensor. Shapes are explicit; layout is the contract
// for checkpoints and for every oracle in the test suite.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(product(shape), 0.0) {}

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static std::size_t product(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool operator==(const Tensor& other) const {
        return shape == other.shape && data == other.data;
    }

    // view as an r x c row-major matrix; r * c must equal numel()
    RowMatrixMap as_matrix(Eigen::Index rows, Eigen::Index cols) {
        return RowMatrixMap(data.data(), rows, cols);
    }
    ConstRowMatrixMap as_matrix(Eigen::Index rows, Eigen::Index cols) const {
        return ConstRowMatrixMap(data.data(), rows, cols);
    }

    std::string shape_string() const {
        std::string out = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) out += ", ";
            out += std::to_string(shape[i]);
        }
        return out + "]";
    }
};

inline Tensor tensor_from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    RowMatrixMap(t.data.data(), m.rows(), m.cols()) = m;
    return t;
}

inline Eigen::MatrixXd matrix_from_tensor(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
    return t.as_matrix(rows, cols);
}

} // namespace fdnz
