#include "protofuse/metalearn/proto.hpp"

#include <cmath>
#include <stdexcept>

#include "protofuse/autograd/ops.hpp"

namespace protofuse::metalearn {

std::string to_string(Distance d) {
  return d == Distance::euclidean ? "euclidean" : "squared_euclidean";
}

Distance distance_from_string(std::string_view s) {
  if (s == "euclidean") return Distance::euclidean;
  if (s == "squared_euclidean") return Distance::squared_euclidean;
  throw std::invalid_argument("unknown distance '" + std::string(s) +
                              "' (expected euclidean|squared_euclidean)");
}

namespace {

// Row-averaging matrix A with (A X) = per-class means.
ag::Matrix averaging(std::span<const std::size_t> classes, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto c : classes) {
    if (c >= n_classes) throw std::invalid_argument("prototypes: class index out of range");
    ++counts[c];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("prototypes: class " + std::to_string(c) + " has no support vector");
    }
  }
  ag::Matrix A = ag::Matrix::Zero(static_cast<Eigen::Index>(n_classes),
                                  static_cast<Eigen::Index>(classes.size()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    A(static_cast<Eigen::Index>(classes[i]), static_cast<Eigen::Index>(i)) =
        1.0 / static_cast<double>(counts[classes[i]]);
  }
  return A;
}

}  // namespace

Prototypes compute_prototypes(const ag::Matrix& vectors, std::span<const std::size_t> classes,
                              std::size_t n_classes) {
  if (static_cast<std::size_t>(vectors.rows()) != classes.size()) {
    throw std::invalid_argument("compute_prototypes: one class per vector required");
  }
  // Summation in support order, then a single division, for exact means.
  std::vector<std::size_t> counts(n_classes, 0);
  ag::Matrix sums = ag::Matrix::Zero(static_cast<Eigen::Index>(n_classes), vectors.cols());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= n_classes) throw std::invalid_argument("prototypes: class index out of range");
    sums.row(static_cast<Eigen::Index>(classes[i])) += vectors.row(static_cast<Eigen::Index>(i));
    ++counts[classes[i]];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("prototypes: class " + std::to_string(c) + " has no support vector");
    }
    sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
  return {std::move(sums)};
}

ag::Var prototype_matrix(const ag::Var& vectors, std::span<const std::size_t> classes,
                         std::size_t n_classes) {
  return ag::matmul(ag::constant(averaging(classes, n_classes)), vectors);
}

std::vector<double> distances(const ag::RowVector& q, const Prototypes& protos, Distance d) {
  std::vector<double> out(protos.n_classes());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double sq = (q - protos.vectors.row(static_cast<Eigen::Index>(c))).squaredNorm();
    out[c] = d == Distance::euclidean ? std::sqrt(sq) : sq;
  }
  return out;
}

std::size_t argmin(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ClassDistribution proto_classify(const ag::RowVector& q, const Prototypes& protos, Distance d) {
  if (protos.n_classes() == 0) throw std::invalid_argument("proto_classify: no prototypes");
  if (q.cols() != protos.vectors.cols()) throw std::invalid_argument("proto_classify: width mismatch");
  const auto dist = distances(q, protos, d);
  for (double x : dist) {
    if (!std::isfinite(x)) throw std::invalid_argument("proto_classify: non-finite distance");
  }
  ClassDistribution out;
  out.predicted = argmin(dist);
  const double shift = dist[out.predicted];
  double total = 0.0;
  out.probs.resize(dist.size());
  for (std::size_t c = 0; c < dist.size(); ++c) {
    out.probs[c] = std::exp(-(dist[c] - shift));
    total += out.probs[c];
  }
  for (auto& p : out.probs) p /= total;
  return out;
}

ag::Var distance_logits(const ag::Var& queries, const ag::Var& protos, Distance d) {
  ag::Var sq = ag::pairwise_sq_dist(queries, protos);
  return ag::scale(d == Distance::euclidean ? ag::sqrt_nonneg(sq) : sq, -1.0);
}

LinearHead protomaml_head_init(const Prototypes& protos) {
  LinearHead head;
  head.weight = 2.0 * protos.vectors;
  head.bias = -protos.vectors.rowwise().squaredNorm().transpose();
  return head;
}

}  // namespace protofuse::metalearn
