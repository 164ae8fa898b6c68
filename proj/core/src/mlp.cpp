#include <cmath>
#include <stdexcept>
#include <string>

#include "guard/policy_net.hpp"

namespace guard::nn {

namespace {

void validate_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
  for (int s : sizes) {
    if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
}

// tanh as 1 - 2 / (exp(2x) + 1): Eigen vectorizes exp for doubles but not
// tanh, and this form is within a few ulps (absolute) everywhere.
template <typename Derived>
void tanh_inplace(Eigen::MatrixBase<Derived>& z) {
  z.array() = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
}

// z <- tanh(z + b) column by column, one pass over memory.
void bias_tanh_inplace(Matrix& z, const Vector& b) {
  for (Index j = 0; j < z.cols(); ++j) {
    z.col(j).array() = 1.0 - 2.0 / ((2.0 * (z.col(j) + b).array()).exp() + 1.0);
  }
}

}  // namespace

Mlp Mlp::zeros(std::vector<int> layer_sizes) {
  validate_sizes(layer_sizes);
  Mlp net;
  net.sizes_ = std::move(layer_sizes);
  for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
    net.weights_.push_back(Matrix::Zero(net.sizes_[l + 1], net.sizes_[l]));
    net.biases_.push_back(Vector::Zero(net.sizes_[l + 1]));
  }
  return net;
}

Mlp::Mlp(std::vector<int> layer_sizes, num::RngStream& rng) {
  *this = zeros(std::move(layer_sizes));
  for (auto& w : weights_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    // Column-major fill keeps the draw order tied to the flat layout.
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    }
  }
}

std::vector<int> Mlp::architecture(int in_dim, const std::vector<int>& hidden, int out_dim) {
  std::vector<int> sizes;
  sizes.reserve(hidden.size() + 2);
  sizes.push_back(in_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out_dim);
  return sizes;
}

Index Mlp::num_params() const {
  Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Vector Mlp::flat() const {
  Vector out(num_params());
  Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Index nw = weights_[l].size();
    out.segment(offset, nw) = weights_[l].reshaped();
    offset += nw;
    out.segment(offset, biases_[l].size()) = biases_[l];
    offset += biases_[l].size();
  }
  return out;
}

void Mlp::set_flat(const Eigen::Ref<const Vector>& params) {
  if (params.size() != num_params()) {
    throw std::invalid_argument("Mlp::set_flat: expected " + std::to_string(num_params()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Index nw = weights_[l].size();
    weights_[l].reshaped() = params.segment(offset, nw);
    offset += nw;
    biases_[l] = params.segment(offset, biases_[l].size());
    offset += biases_[l].size();
  }
}

void Mlp::check_input(Index rows) const {
  if (sizes_.empty()) throw std::logic_error("Mlp: used before initialisation");
  if (rows != input_dim()) {
    throw std::invalid_argument("Mlp: input dimension " + std::to_string(rows) +
                                " does not match network input " + std::to_string(input_dim()));
  }
}

Matrix Mlp::forward(const Matrix& inputs) const {
  check_input(inputs.rows());
  Matrix a = inputs;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix z = weights_[l] * a;
    if (l < last) {
      bias_tanh_inplace(z, biases_[l]);
    } else {
      z.colwise() += biases_[l];
    }
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::forward(const Matrix& inputs, Tape& tape) const {
  check_input(inputs.rows());
  tape.activations.clear();
  tape.activations.reserve(weights_.size() + 1);
  tape.activations.push_back(inputs);
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix z = weights_[l] * tape.activations.back();
    if (l < last) {
      bias_tanh_inplace(z, biases_[l]);
    } else {
      z.colwise() += biases_[l];
    }
    tape.activations.push_back(std::move(z));
  }
  return tape.activations.back();
}

Vector Mlp::forward(const Vector& input) const {
  check_input(input.size());
  Vector a = input;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Vector z = weights_[l] * a + biases_[l];
    if (l < last) tanh_inplace(z);
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& grad_out,
                     Eigen::Ref<Vector> param_grad, bool input_grad) const {
  if (param_grad.size() != num_params()) {
    throw std::invalid_argument("Mlp::backward: gradient buffer has wrong length");
  }
  if (tape.activations.size() != weights_.size() + 1 ||
      grad_out.rows() != output_dim() || grad_out.cols() != tape.activations.back().cols()) {
    throw std::invalid_argument("Mlp::backward: tape or output gradient has wrong shape");
  }

  // Offsets of each layer's block in the flat layout.
  std::vector<Index> offsets(weights_.size());
  Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offsets[l] = offset;
    offset += weights_[l].size() + biases_[l].size();
  }

  Matrix delta = grad_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Matrix& a_in = tape.activations[l];
    const Index nw = weights_[l].size();
    param_grad.segment(offsets[l], nw).reshaped(weights_[l].rows(), weights_[l].cols()) +=
        delta * a_in.transpose();
    param_grad.segment(offsets[l] + nw, biases_[l].size()) += delta.rowwise().sum();
    if (l == 0 && !input_grad) return Matrix();
    Matrix upstream = weights_[l].transpose() * delta;
    if (l > 0) {
      upstream.array() *= 1.0 - a_in.array().square();
    }
    delta = std::move(upstream);
  }
  return delta;
}

Matrix Mlp::jvp(const Tape& tape, const Eigen::Ref<const Vector>& direction) const {
  if (direction.size() != num_params()) {
    throw std::invalid_argument("Mlp::jvp: direction has wrong length");
  }
  const Index n = tape.activations.front().cols();
  Matrix da = Matrix::Zero(input_dim(), n);
  Index offset = 0;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    const Index rows = weights_[l].rows();
    const Index cols = weights_[l].cols();
    const auto dw = direction.segment(offset, rows * cols).reshaped(rows, cols);
    offset += rows * cols;
    const auto db = direction.segment(offset, rows);
    offset += rows;
    Matrix dz = dw * tape.activations[l] + weights_[l] * da;
    dz.colwise() += db;
    if (l < last) {
      dz.array() *= 1.0 - tape.activations[l + 1].array().square();
    }
    da = std::move(dz);
  }
  return da;
}

}  // namespace guard::nn
