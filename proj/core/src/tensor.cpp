#include "pfl/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace pfl {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + pfl::shape_str(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + pfl::shape_str(shape_));
  }
  if (product(shape_) != data_.size()) {
    throw ShapeError("shape " + pfl::shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
  if (rank() <= 1) return 1;
  return product(shape_) / shape_.back();
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_str());
  }
  return data_[0];
}

std::string Tensor::shape_str() const { return pfl::shape_str(shape_); }

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(data_.data(), other.data_.data(),
                     data_.size() * sizeof(double)) == 0;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_str() + " x " +
                     b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs rank 2, got " + a.shape_str());
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() > 2 || (x.rank() > 0 && axis >= x.rank()) ||
      (x.rank() == 0 && axis != 0)) {
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " invalid for shape " + x.shape_str());
  }
  Tensor out = x;
  // Normalize along columns of a matrix view: axis == last -> per row.
  const bool per_row = x.rank() <= 1 || axis == 1;
  const std::size_t rows = x.rows(), cols = x.cols();
  const std::size_t outer = per_row ? rows : cols;
  const std::size_t inner = per_row ? cols : rows;
  for (std::size_t o = 0; o < outer; ++o) {
    auto idx = [&](std::size_t i) {
      return per_row ? o * cols + i : i * cols + o;
    };
    double mx = x[idx(0)];
    for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, x[idx(i)]);
    double sum = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      const double e = std::exp(x[idx(i)] - mx);
      out[idx(i)] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out[idx(i)] /= sum;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm gain/bias " + gain.shape_str() + "/" +
                     bias.shape_str() + " do not match input " + x.shape_str());
  }
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* row = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = (row[j] - mean) * inv * gain[j] + bias[j];
    }
  }
  return out;
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t c = logits.size();
  if (label >= c) {
    throw std::out_of_range("label " + std::to_string(label) +
                            " out of range for " + std::to_string(c) + " classes");
  }
  double mx = logits[0];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < c; ++i) sum += std::exp(logits[i] - mx);
  return std::log(sum) + mx - logits[label];
}

}  // namespace pfl
