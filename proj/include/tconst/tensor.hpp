#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace tconst {

using TokenId = std::int32_t;

// Non-owning row-major matrix window. Rows are `stride` floats apart.
struct MatrixView {
  const float* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  const float* row(std::size_t i) const { return data + i * stride; }
  MatrixView slice_rows(std::size_t begin, std::size_t end) const;
};

// Dense fp32 tensor, row-major. Matrix helpers treat the last extent as
// columns and fold every leading extent into rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor vector(std::initializer_list<float> values);
  static Tensor from_view(MatrixView view);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : values_.size() / cols(); }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }

  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;
  float& at(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }
  float at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }

  MatrixView view() const { return {values_.data(), rows(), cols(), cols()}; }
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  bool all_finite() const;
  bool bitwise_equal(const Tensor& other) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

// Row-major boolean matrix; true marks an allowed position.
class BoolMask {
 public:
  BoolMask() = default;
  BoolMask(std::size_t rows, std::size_t cols, bool fill);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allowed) { bits_[i * cols_ + j] = allowed ? 1 : 0; }
  const std::uint8_t* row(std::size_t i) const { return bits_.data() + i * cols_; }
  std::size_t count_allowed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline constexpr float kLayerNormEps = 1e-5f;

// c[i][j] accumulates a[i][k] * b[k][j] for k = 0, 1, ... in order, per row.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul(MatrixView a, const Tensor& b);
// a * bᵀ; c[i][j] accumulates a[i][k] * b[j][k] for k = 0, 1, ...
Tensor matmul_bt(MatrixView a, const Tensor& b);

Tensor softmax_lastdim(const Tensor& x, const BoolMask* mask = nullptr);

// In-place softmax over `n` scores. `allowed` may be null (all allowed).
// Disallowed entries are written as exactly 0. Throws on a fully-masked row.
void softmax_row(float* scores, const std::uint8_t* allowed, std::size_t n);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);
Tensor layer_norm(MatrixView x, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);

// Interleaved sin/cos absolute encoding; defined for any position.
Tensor sinusoidal_position(std::uint64_t pos, std::size_t d_model);

Tensor gelu(Tensor x);
void add_inplace(Tensor& acc, const Tensor& rhs);

// Row i is embedding[ids[i]] + sinusoidal_position(first_pos + i).
Tensor embed_tokens(const Tensor& embedding, std::span<const TokenId> ids,
                    std::uint64_t first_pos, bool add_positions = true);

std::size_t argmax_row(std::span<const float> row);

void require_finite(const Tensor& t, const char* where);

}  // namespace tconst
