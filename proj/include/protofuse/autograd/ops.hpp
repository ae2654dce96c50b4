#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protofuse/autograd/tensor.hpp"

namespace protofuse {
class Rng;
}

namespace protofuse::ag {

Var constant(Matrix value);

Var matmul(const Var& a, const Var& b);
/// a @ b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
Var linear(const Var& x, const Var& weight, const Var& bias);

/// out[i] = table[ids[i]]; backward scatter-adds into the table.
Var gather_rows(const Var& table, std::span<const Eigen::Index> ids);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var tanh(const Var& x);
/// tanh-approximated GELU.
Var gelu(const Var& x);
/// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, double p, Rng& rng);

/// Elementwise sqrt for non-negative inputs; gradient at 0 is taken as 0.
Var sqrt_nonneg(const Var& x);

/// (n x d), (c x d) -> (n x c) with entry ||q_i - p_j||^2.
Var pairwise_sq_dist(const Var& q, const Var& p);

Var sum(const Var& x);
Var mean(const Var& x);

/// Mean negative log-likelihood of `targets` under row-softmax(logits).
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

/// Shapes of a batched multi-head attention call. Query rows are laid out as
/// `batch` blocks of `q_len`, key/value rows as `batch` blocks of `k_len`.
struct AttentionShape {
  std::size_t batch = 1;
  std::size_t q_len = 1;
  std::size_t k_len = 1;
  std::size_t heads = 1;
};

/// Scaled dot-product attention over pre-projected q, k, v. `key_mask` has
/// batch * k_len entries; zero entries receive exactly zero weight. Every
/// batch block needs at least one valid key.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape,
              std::span<const std::uint8_t> key_mask);

/// Attention probabilities for one batch block and head (q_len x k_len).
Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionShape& shape,
                         std::span<const std::uint8_t> key_mask, std::size_t block,
                         std::size_t head);

/// Row-wise softmax, numerically stabilised.
Matrix softmax_rows(const Matrix& logits);

}  // namespace protofuse::ag
