#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/autograd/tensor.hpp"

namespace protofuse::metalearn {

enum class Distance { euclidean, squared_euclidean };

std::string to_string(Distance d);
Distance distance_from_string(std::string_view s);

/// Per-class centroids; row c is v_c, rows follow manifest class order.
struct Prototypes {
  ag::Matrix vectors;

  std::size_t n_classes() const { return static_cast<std::size_t>(vectors.rows()); }
};

/// v_c = mean of the vectors whose class is c. Throws when a class in
/// [0, n_classes) has no vector.
Prototypes compute_prototypes(const ag::Matrix& vectors, std::span<const std::size_t> classes,
                              std::size_t n_classes);

/// Differentiable counterpart: (n_classes x d) means of the rows of `vectors`.
ag::Var prototype_matrix(const ag::Var& vectors, std::span<const std::size_t> classes,
                         std::size_t n_classes);

/// Distances from one point to every prototype.
std::vector<double> distances(const ag::RowVector& q, const Prototypes& protos, Distance d);

struct ClassDistribution {
  std::vector<double> probs;
  std::size_t predicted = 0;  // nearest prototype, lowest index on ties
};

/// p(c) = exp(-d(q, v_c)) / sum_c' exp(-d(q, v_c')). Throws on a
/// non-finite distance or empty prototypes.
ClassDistribution proto_classify(const ag::RowVector& q, const Prototypes& protos, Distance d);

/// Index of the smallest entry, lowest index on ties.
std::size_t argmin(std::span<const double> values);
std::size_t argmax(std::span<const double> values);

/// Differentiable logits -d(q_i, v_c): (n x C).
ag::Var distance_logits(const ag::Var& queries, const ag::Var& protos, Distance d);

/// Linear classifier logits = x W^T + b, W is (C x d).
struct LinearHead {
  ag::Matrix weight;
  ag::RowVector bias;
};

/// ProtoMAML initialization: row c of W is 2 v_c and b_c = -||v_c||^2, so
/// softmax(W x + b) equals the squared-Euclidean prototype distribution.
LinearHead protomaml_head_init(const Prototypes& protos);

}  // namespace protofuse::metalearn
