#include "tconst/attention.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tconst/errors.hpp"

namespace tconst {

void AttentionSpec::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("attention: n_heads must divide d_model");
  }
}

std::size_t AttentionMask::prefix_length(std::size_t row, std::size_t n_keys) const {
  switch (kind_) {
    case Kind::None: return n_keys;
    case Kind::Causal: return std::min(n_keys, row + offset_ + 1);
    case Kind::Explicit: break;
  }
  throw ContractError("prefix_length on an explicit mask");
}

BoolMask causal_mask(std::size_t length) {
  BoolMask m(length, length, false);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  }
  return m;
}

Tensor scaled_dot_attention(MatrixView q, MatrixView k, MatrixView v, const AttentionMask& mask,
                            const AttentionSpec& spec, CostLedger& meter, CostTag tag) {
  spec.validate();
  const std::size_t d = spec.d_model;
  if (q.cols != d || k.cols != d || v.cols != d) {
    throw ContractError("attention: q/k/v width differs from d_model");
  }
  if (k.rows == 0) {
    throw ContractError("attention: empty key set");
  }
  if (k.rows != v.rows) {
    throw ContractError("attention: key and value counts differ");
  }
  if (mask.is_explicit() && (mask.matrix().rows() != q.rows || mask.matrix().cols() != k.rows)) {
    throw ContractError("attention: mask shape differs from Lq x Lk");
  }

  const std::size_t dh = spec.d_head();
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor out = Tensor::matrix(q.rows, d);
  std::vector<float> scores(k.rows);

  for (std::size_t h = 0; h < spec.n_heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < q.rows; ++i) {
      const std::uint8_t* allowed = mask.is_explicit() ? mask.matrix().row(i) : nullptr;
      const std::size_t n = mask.is_explicit() ? k.rows : mask.prefix_length(i, k.rows);
      if (n == 0) {
        throw ContractError("attention: fully-masked query row");
      }
      const float* qi = q.row(i) + off;
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed != nullptr && !allowed[j]) continue;
        const float* kj = k.row(j) + off;
        float dot = 0.0f;
        for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
        scores[j] = dot * scale;
      }
      softmax_row(scores.data(), allowed, n);
      float* oi = out.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed != nullptr && !allowed[j]) continue;
        const float p = scores[j];
        const float* vj = v.row(j) + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
      }
    }
  }

  meter.record(tag, q.rows, k.rows, d);
  meter.add_full_macs(2ULL * d * q.rows * k.rows);
  require_finite(out, "attention");
  return out;
}

Tensor project(MatrixView x, const Tensor& w, CostLedger& meter) {
  meter.add_full_macs(static_cast<std::uint64_t>(x.rows) * w.rows() * w.cols());
  return matmul(x, w);
}

KVPair project_kv(MatrixView source, const ProjectionSet& weights, CostLedger& meter) {
  return {project(source, weights.wk, meter), project(source, weights.wv, meter)};
}

Tensor self_attention(MatrixView x, const ProjectionSet& weights, const AttentionMask& mask,
                      const AttentionSpec& spec, CostLedger& meter, CostTag tag) {
  const Tensor q = project(x, weights.wq, meter);
  const KVPair kv = project_kv(x, weights, meter);
  const Tensor mixed = scaled_dot_attention(q.view(), kv.k.view(), kv.v.view(), mask, spec, meter, tag);
  return project(mixed.view(), weights.wo, meter);
}

Tensor focused_attention(const Tensor& latent_queries, MatrixView x, const ProjectionSet& weights,
                         const AttentionSpec& spec, CostLedger& meter, CostTag tag) {
  if (x.rows == 0) {
    throw ContractError("focused_attention: empty input sequence");
  }
  const Tensor q = project(latent_queries.view(), weights.wq, meter);
  const KVPair kv = project_kv(x, weights, meter);
  const Tensor mixed =
      scaled_dot_attention(q.view(), kv.k.view(), kv.v.view(), AttentionMask::none(), spec, meter, tag);
  return project(mixed.view(), weights.wo, meter);
}

Tensor cross_attention(MatrixView q_src, MatrixView context, const ProjectionSet& weights,
                       const AttentionSpec& spec, CostLedger& meter, CostTag tag,
                       const KVPair* cached_kv) {
  if (cached_kv == nullptr && context.rows == 0) {
    throw ContractError("cross_attention: no context and no cached keys/values");
  }
  const Tensor q = project(q_src, weights.wq, meter);
  KVPair fresh;
  if (cached_kv == nullptr) fresh = project_kv(context, weights, meter);
  const KVPair& kv = cached_kv != nullptr ? *cached_kv : fresh;
  const Tensor mixed =
      scaled_dot_attention(q.view(), kv.k.view(), kv.v.view(), AttentionMask::none(), spec, meter, tag);
  return project(mixed.view(), weights.wo, meter);
}

}  // namespace tconst
