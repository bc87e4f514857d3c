#pragma once

#include <cstddef>
#include <optional>

#include "tconst/cost_meter.hpp"
#include "tconst/tensor.hpp"

namespace tconst {

struct AttentionSpec {
  std::size_t d_model = 0;
  std::size_t n_heads = 1;

  std::size_t d_head() const { return d_model / n_heads; }
  void validate() const;
};

// Bias-free D x D projections. Inputs multiply from the left: q = x * wq.
struct ProjectionSet {
  Tensor wq;
  Tensor wk;
  Tensor wv;
  Tensor wo;

  std::size_t parameter_count() const { return wq.size() + wk.size() + wv.size() + wo.size(); }
};

struct KVPair {
  Tensor k;
  Tensor v;
};

// Allowed-key pattern for one attention call. `none` and `causal` describe a
// prefix of the keys per query row and never materialize a matrix.
class AttentionMask {
 public:
  static AttentionMask none() { return AttentionMask(Kind::None, 0, nullptr); }
  // Query row i sees keys j <= i + key_offset.
  static AttentionMask causal(std::size_t key_offset = 0) {
    return AttentionMask(Kind::Causal, key_offset, nullptr);
  }
  // The mask must outlive the call.
  static AttentionMask explicit_mask(const BoolMask& mask) {
    return AttentionMask(Kind::Explicit, 0, &mask);
  }

  bool is_explicit() const { return kind_ == Kind::Explicit; }
  const BoolMask& matrix() const { return *explicit_; }
  // Number of leading keys allowed for query row i (prefix kinds only).
  std::size_t prefix_length(std::size_t row, std::size_t n_keys) const;

 private:
  enum class Kind { None, Causal, Explicit };
  AttentionMask(Kind kind, std::size_t offset, const BoolMask* mask)
      : kind_(kind), offset_(offset), explicit_(mask) {}

  Kind kind_;
  std::size_t offset_;
  const BoolMask* explicit_;
};

// Allowed iff j <= i.
BoolMask causal_mask(std::size_t length);

// Multi-head softmax(q kᵀ / sqrt(d_head)) v on already-projected inputs,
// heads laid out as contiguous d_head slices of D. Records D * Lq * Lk.
// Throws ContractError on an empty key set or a fully-masked query row.
Tensor scaled_dot_attention(MatrixView q, MatrixView k, MatrixView v, const AttentionMask& mask,
                            const AttentionSpec& spec, CostLedger& meter, CostTag tag);

// x * w, counted in the meter's full-MAC total.
Tensor project(MatrixView x, const Tensor& w, CostLedger& meter);

KVPair project_kv(MatrixView source, const ProjectionSet& weights, CostLedger& meter);

// Unmasked self-attention over x with output projection.
Tensor self_attention(MatrixView x, const ProjectionSet& weights, const AttentionMask& mask,
                      const AttentionSpec& spec, CostLedger& meter, CostTag tag);

// Compresses any number of rows of x into latent_queries.rows() rows.
// Queries come from the latent bank, keys and values from x; no mask.
Tensor focused_attention(const Tensor& latent_queries, MatrixView x, const ProjectionSet& weights,
                         const AttentionSpec& spec, CostLedger& meter, CostTag tag);

// Queries from q_src, keys and values from context, or from cached_kv when
// given (must hold the projections of the same context).
Tensor cross_attention(MatrixView q_src, MatrixView context, const ProjectionSet& weights,
                       const AttentionSpec& spec, CostLedger& meter, CostTag tag,
                       const KVPair* cached_kv = nullptr);

}  // namespace tconst
