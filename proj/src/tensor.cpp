#include "tconst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "tconst/errors.hpp"

namespace tconst {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

MatrixView MatrixView::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows) {
    throw ContractError("row slice out of range");
  }
  return {data + begin * stride, end - begin, cols, stride};
}

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw ContractError("tensor shape does not match value count");
  }
  require_finite(*this, "Tensor");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, float fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<float> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) {
      throw ContractError("ragged rows");
    }
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

Tensor Tensor::from_view(MatrixView view) {
  Tensor out = matrix(view.rows, view.cols);
  for (std::size_t i = 0; i < view.rows; ++i) {
    std::memcpy(out.data() + i * view.cols, view.row(i), view.cols * sizeof(float));
  }
  return out;
}

std::span<float> Tensor::row(std::size_t i) {
  return std::span<float>(values_).subspan(i * cols(), cols());
}

std::span<const float> Tensor::row(std::size_t i) const {
  return std::span<const float>(values_).subspan(i * cols(), cols());
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  return from_view(view().slice_rows(begin, end));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

BoolMask::BoolMask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

std::size_t BoolMask::count_allowed() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) {
    throw ContractError(std::string(where) + ": non-finite value");
  }
}

Tensor matmul(MatrixView a, const Tensor& b) {
  if (a.cols != b.rows()) {
    throw ContractError("matmul: inner extents differ (" + shape_str(a.rows, a.cols) + " * " +
                        shape_str(b.rows(), b.cols()) + ")");
  }
  const std::size_t n = b.cols();
  Tensor c = Tensor::matrix(a.rows, n);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const float* ai = a.row(i);
    float* ci = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const float aik = ai[k];
      const float* bk = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) {
        ci[j] += aik * bk[j];
      }
    }
  }
  require_finite(c, "matmul");
  return c;
}

Tensor matmul_bt(MatrixView a, const Tensor& b) {
  if (a.cols != b.cols()) {
    throw ContractError("matmul_bt: inner extents differ (" + shape_str(a.rows, a.cols) + " * (" +
                        shape_str(b.rows(), b.cols()) + ")^T)");
  }
  const std::size_t n = b.rows();
  Tensor c = Tensor::matrix(a.rows, n);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const float* ai = a.row(i);
    float* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const float* bj = b.data() + j * a.cols;
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  require_finite(c, "matmul_bt");
  return c;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2) {
    throw ContractError("matmul expects rank-2 operands");
  }
  return matmul(a.view(), b);
}

void softmax_row(float* scores, const std::uint8_t* allowed, std::size_t n) {
  float max_score = -std::numeric_limits<float>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (allowed == nullptr || allowed[j]) {
      max_score = std::max(max_score, scores[j]);
      any = true;
    }
  }
  if (!any) {
    throw ContractError("softmax: fully-masked row");
  }
  float total = 0.0f;
  for (std::size_t j = 0; j < n; ++j) {
    if (allowed == nullptr || allowed[j]) {
      scores[j] = std::exp(scores[j] - max_score);
      total += scores[j];
    } else {
      scores[j] = 0.0f;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    scores[j] = scores[j] / total;
  }
}

Tensor softmax_lastdim(const Tensor& x, const BoolMask* mask) {
  require_finite(x, "softmax_lastdim");
  if (mask != nullptr && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ContractError("softmax_lastdim: mask shape differs from input");
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    softmax_row(out.data() + i * out.cols(), mask ? mask->row(i) : nullptr, out.cols());
  }
  return out;
}

Tensor layer_norm(MatrixView x, const Tensor& gain, const Tensor& bias, float eps) {
  const std::size_t d = x.cols;
  if (gain.size() != d || bias.size() != d) {
    throw ContractError("layer_norm: gain/bias extent differs from last extent");
  }
  Tensor out = Tensor::matrix(x.rows, d);
  const float inv_d = 1.0f / static_cast<float>(d);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const float* xi = x.row(i);
    float mean = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean *= inv_d;
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) {
      const float c = xi[j] - mean;
      var += c * c;
    }
    var *= inv_d;
    const float inv_std = 1.0f / std::sqrt(var + eps);
    float* oi = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      oi[j] = (xi[j] - mean) * inv_std * gain.data()[j] + bias.data()[j];
    }
  }
  require_finite(out, "layer_norm");
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  Tensor out = layer_norm(x.view(), gain, bias, eps);
  return Tensor(x.shape(), std::vector<float>(out.values().begin(), out.values().end()));
}

namespace {

std::vector<double> position_frequencies(std::size_t d_model) {
  std::vector<double> freq(d_model / 2);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    freq[i] = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d_model));
  }
  return freq;
}

void write_position(float* dst, std::uint64_t pos, const std::vector<double>& freq, bool accumulate) {
  const double p = static_cast<double>(pos);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    const auto s = static_cast<float>(std::sin(p * freq[i]));
    const auto c = static_cast<float>(std::cos(p * freq[i]));
    if (accumulate) {
      dst[2 * i] += s;
      dst[2 * i + 1] += c;
    } else {
      dst[2 * i] = s;
      dst[2 * i + 1] = c;
    }
  }
}

}  // namespace

Tensor sinusoidal_position(std::uint64_t pos, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("sinusoidal_position: d_model must be even and positive");
  }
  Tensor pe({d_model});
  write_position(pe.data(), pos, position_frequencies(d_model), false);
  return pe;
}

Tensor gelu(Tensor x) {
  constexpr float kAlpha = 0.7978845608028654f;  // sqrt(2/pi)
  for (float& v : x.values()) {
    v = 0.5f * v * (1.0f + std::tanh(kAlpha * (v + 0.044715f * v * v * v)));
  }
  return x;
}

void add_inplace(Tensor& acc, const Tensor& rhs) {
  if (acc.size() != rhs.size()) {
    throw ContractError("add: size mismatch");
  }
  float* a = acc.data();
  const float* b = rhs.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

Tensor embed_tokens(const Tensor& embedding, std::span<const TokenId> ids, std::uint64_t first_pos,
                    bool add_positions) {
  const std::size_t d = embedding.cols();
  const std::size_t vocab = embedding.rows();
  if (add_positions && d % 2 != 0) {
    throw ConfigError("embed_tokens: positional encoding needs an even width");
  }
  const std::vector<double> freq = add_positions ? position_frequencies(d) : std::vector<double>{};
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ContractError("token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    auto src = embedding.row(static_cast<std::size_t>(ids[i]));
    float* dst = out.data() + i * d;
    std::copy(src.begin(), src.end(), dst);
    if (add_positions) {
      write_position(dst, first_pos + i, freq, true);
    }
  }
  return out;
}

std::size_t argmax_row(std::span<const float> row) {
  if (row.empty()) {
    throw ContractError("argmax of empty row");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;  // strict: ties keep the lowest id
  }
  return best;
}

}  // namespace tconst
