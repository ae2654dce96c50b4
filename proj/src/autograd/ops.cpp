#include "protofuse/autograd/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "protofuse/rng.hpp"

namespace protofuse::ag {
namespace {

// Parent gradient buffer, zero-initialised on first touch.
Matrix& grad_of(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

std::string shape(const Var& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

}  // namespace

Var constant(Matrix value) { return Var(std::move(value), false); }

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul", shape(a) + " @ " + shape(b));
  Matrix out = a.value() * b.value();
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    if (wants(self, 0)) grad_of(*self.parents[0]).noalias() += self.grad * B.transpose();
    if (wants(self, 1)) grad_of(*self.parents[1]).noalias() += A.transpose() * self.grad;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt", shape(a) + " @ " + shape(b) + "^T");
  Matrix out = a.value() * b.value().transpose();
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    if (wants(self, 0)) grad_of(*self.parents[0]).noalias() += self.grad * B;
    if (wants(self, 1)) grad_of(*self.parents[1]).noalias() += self.grad.transpose() * A;
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape(a) + " + " + shape(b));
  return Var::make(a.value() + b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]) += self.grad;
    if (wants(self, 1)) grad_of(*self.parents[1]) += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", shape(a) + " - " + shape(b));
  return Var::make(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]) += self.grad;
    if (wants(self, 1)) grad_of(*self.parents[1]) -= self.grad;
  });
}

Var scale(const Var& a, double s) {
  return Var::make(a.value() * s, {a}, [s](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]) += self.grad * s;
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", shape(a) + " + " + shape(row));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return Var::make(std::move(out), {a, row}, [](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]) += self.grad;
    if (wants(self, 1)) grad_of(*self.parents[1]) += self.grad.colwise().sum();
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var gather_rows(const Var& table, std::span<const Eigen::Index> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows",
            "row " + std::to_string(ids[i]) + " out of range for " + shape(table));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<Eigen::Index> idx(ids.begin(), ids.end());
  return Var::make(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
    if (!wants(self, 0)) return;
    Matrix& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 &&
              beta.cols() == x.cols(),
          "layer_norm", "gain/bias must be 1x" + std::to_string(x.cols()));
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_sigma(n);
  const Matrix& X = x.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    inv_sigma(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (X.row(i).array() - mu) * inv_sigma(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return Var::make(std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& self) {
                     const Matrix& G = self.grad;
                     const auto& g = self.parents[1]->value;
                     if (wants(self, 1)) {
                       grad_of(*self.parents[1]) += (G.array() * xhat.array()).colwise().sum().matrix();
                     }
                     if (wants(self, 2)) grad_of(*self.parents[2]) += G.colwise().sum();
                     if (wants(self, 0)) {
                       Matrix& dx = grad_of(*self.parents[0]);
                       const Matrix dxhat = G.array().rowwise() * g.row(0).array();
                       for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                         const double m1 = dxhat.row(i).mean();
                         const double m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
                         dx.row(i).array() +=
                             inv_sigma(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                       }
                     }
                   });
}

Var tanh(const Var& x) {
  Matrix out = x.value().array().tanh();
  return Var::make(out, {x}, [out](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]).array() += self.grad.array() * (1.0 - out.array().square());
  });
}

Var gelu(const Var& x) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double a = 0.044715;
  const Matrix& X = x.value();
  Matrix t = (c * (X.array() + a * X.array().cube())).tanh();
  Matrix out = 0.5 * X.array() * (1.0 + t.array());
  return Var::make(std::move(out), {x}, [t = std::move(t)](Node& self) {
    if (!wants(self, 0)) return;
    const auto X = self.parents[0]->value.array();
    const auto T = t.array();
    const auto d = 0.5 * (1.0 + T) + 0.5 * X * (1.0 - T.square()) * c * (1.0 + 3.0 * a * X.square());
    grad_of(*self.parents[0]).array() += self.grad.array() * d;
  });
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  require(p < 1.0, "dropout", "rate must be < 1");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  Matrix out = x.value().cwiseProduct(mask);
  return Var::make(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]) += self.grad.cwiseProduct(mask);
  });
}

Var sqrt_nonneg(const Var& x) {
  Matrix out = x.value().array().max(0.0).sqrt();
  return Var::make(out, {x}, [out](Node& self) {
    if (!wants(self, 0)) return;
    Matrix& g = grad_of(*self.parents[0]);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (out.data()[i] > 0.0) g.data()[i] += self.grad.data()[i] * 0.5 / out.data()[i];
    }
  });
}

Var pairwise_sq_dist(const Var& q, const Var& p) {
  require(q.cols() == p.cols(), "pairwise_sq_dist", shape(q) + " vs " + shape(p));
  const Matrix& Q = q.value();
  const Matrix& P = p.value();
  Matrix out(Q.rows(), P.rows());
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.rows(); ++j) out(i, j) = (Q.row(i) - P.row(j)).squaredNorm();
  }
  return Var::make(std::move(out), {q, p}, [](Node& self) {
    const Matrix& Q = self.parents[0]->value;
    const Matrix& P = self.parents[1]->value;
    const Matrix& G = self.grad;
    if (wants(self, 0)) {
      Matrix& dq = grad_of(*self.parents[0]);
      dq += 2.0 * (G.rowwise().sum().asDiagonal() * Q - G * P);
    }
    if (wants(self, 1)) {
      Matrix& dp = grad_of(*self.parents[1]);
      dp += 2.0 * (G.colwise().sum().transpose().asDiagonal() * P - G.transpose() * Q);
    }
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return Var::make(std::move(out), {x}, [](Node& self) {
    if (wants(self, 0)) grad_of(*self.parents[0]).array() += self.grad(0, 0);
  });
}

Var mean(const Var& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  require(static_cast<std::size_t>(logits.rows()) == targets.size() && !targets.empty(),
          "cross_entropy", "targets must match logits rows");
  const Matrix& L = logits.value();
  Matrix probs = softmax_rows(L);
  double total = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
    require(t < L.cols(), "cross_entropy", "target out of range");
    const double m = L.row(i).maxCoeff();
    const double lse = m + std::log((L.row(i).array() - m).exp().sum());
    total += lse - L(i, t);
  }
  const double n = static_cast<double>(L.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return Var::make(std::move(out), {logits},
                   [probs = std::move(probs), tgt = std::move(tgt), n](Node& self) {
                     if (!wants(self, 0)) return;
                     Matrix d = probs;
                     for (std::size_t i = 0; i < tgt.size(); ++i) {
                       d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(tgt[i])) -= 1.0;
                     }
                     grad_of(*self.parents[0]) += d * (self.grad(0, 0) / n);
                   });
}

namespace {

void check_attention(const Var& q, const Var& k, const Var& v, const AttentionShape& s,
                     std::span<const std::uint8_t> key_mask) {
  require(s.heads > 0 && q.cols() % static_cast<Eigen::Index>(s.heads) == 0, "attention",
          "width " + std::to_string(q.cols()) + " not divisible by " + std::to_string(s.heads) +
              " heads");
  require(k.cols() == q.cols() && v.cols() == q.cols(), "attention", "q/k/v width mismatch");
  require(static_cast<std::size_t>(q.rows()) == s.batch * s.q_len, "attention", "query rows");
  require(static_cast<std::size_t>(k.rows()) == s.batch * s.k_len &&
              static_cast<std::size_t>(v.rows()) == s.batch * s.k_len,
          "attention", "key/value rows");
  require(key_mask.size() == s.batch * s.k_len, "attention", "key mask size");
  for (std::size_t b = 0; b < s.batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < s.k_len; ++j) any = any || key_mask[b * s.k_len + j] != 0;
    require(any, "attention", "block " + std::to_string(b) + " has no valid key position");
  }
}

Matrix block_weights(const Matrix& Q, const Matrix& K, const AttentionShape& s,
                     std::span<const std::uint8_t> mask, std::size_t b, std::size_t h) {
  const Eigen::Index dh = Q.cols() / static_cast<Eigen::Index>(s.heads);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto ql = static_cast<Eigen::Index>(s.q_len), kl = static_cast<Eigen::Index>(s.k_len);
  const auto qh = Q.block(static_cast<Eigen::Index>(b) * ql, static_cast<Eigen::Index>(h) * dh, ql, dh);
  const auto kh = K.block(static_cast<Eigen::Index>(b) * kl, static_cast<Eigen::Index>(h) * dh, kl, dh);
  Matrix P = (qh * kh.transpose()) * inv;
  const std::uint8_t* m = mask.data() + b * s.k_len;
  for (Eigen::Index i = 0; i < ql; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < kl; ++j) {
      if (m[j]) mx = std::max(mx, P(i, j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < kl; ++j) {
      P(i, j) = m[j] ? std::exp(P(i, j) - mx) : 0.0;
      total += P(i, j);
    }
    P.row(i) /= total;
  }
  return P;
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionShape& shape,
                         std::span<const std::uint8_t> key_mask, std::size_t block,
                         std::size_t head) {
  return block_weights(q, k, shape, key_mask, block, head);
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& s,
              std::span<const std::uint8_t> key_mask) {
  check_attention(q, k, v, s, key_mask);
  const Eigen::Index dh = q.cols() / static_cast<Eigen::Index>(s.heads);
  const auto ql = static_cast<Eigen::Index>(s.q_len), kl = static_cast<Eigen::Index>(s.k_len);
  std::vector<Matrix> probs;
  probs.reserve(s.batch * s.heads);
  Matrix out(q.rows(), q.cols());
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      Matrix P = block_weights(q.value(), k.value(), s, key_mask, b, h);
      const auto r0q = static_cast<Eigen::Index>(b) * ql, r0k = static_cast<Eigen::Index>(b) * kl;
      const auto c0 = static_cast<Eigen::Index>(h) * dh;
      out.block(r0q, c0, ql, dh).noalias() = P * v.value().block(r0k, c0, kl, dh);
      probs.push_back(std::move(P));
    }
  }
  return Var::make(std::move(out), {q, k, v}, [s, probs = std::move(probs)](Node& self) {
    const Matrix& Q = self.parents[0]->value;
    const Matrix& K = self.parents[1]->value;
    const Matrix& V = self.parents[2]->value;
    const Eigen::Index dh = Q.cols() / static_cast<Eigen::Index>(s.heads);
    const auto ql = static_cast<Eigen::Index>(s.q_len), kl = static_cast<Eigen::Index>(s.k_len);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix* dQ = wants(self, 0) ? &grad_of(*self.parents[0]) : nullptr;
    Matrix* dK = wants(self, 1) ? &grad_of(*self.parents[1]) : nullptr;
    Matrix* dV = wants(self, 2) ? &grad_of(*self.parents[2]) : nullptr;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t h = 0; h < s.heads; ++h) {
        const Matrix& P = probs[b * s.heads + h];
        const auto r0q = static_cast<Eigen::Index>(b) * ql, r0k = static_cast<Eigen::Index>(b) * kl;
        const auto c0 = static_cast<Eigen::Index>(h) * dh;
        const Matrix dO = self.grad.block(r0q, c0, ql, dh);
        if (dV) dV->block(r0k, c0, kl, dh).noalias() += P.transpose() * dO;
        if (!dQ && !dK) continue;
        const Matrix dP = dO * V.block(r0k, c0, kl, dh).transpose();
        const Eigen::VectorXd row_dot = (dP.array() * P.array()).rowwise().sum();
        const Matrix dS = (P.array() * (dP.colwise() - row_dot).array()).matrix() * inv;
        if (dQ) dQ->block(r0q, c0, ql, dh).noalias() += dS * K.block(r0k, c0, kl, dh);
        if (dK) dK->block(r0k, c0, kl, dh).noalias() += dS.transpose() * Q.block(r0q, c0, ql, dh);
      }
    }
  });
}

}  // namespace protofuse::ag
