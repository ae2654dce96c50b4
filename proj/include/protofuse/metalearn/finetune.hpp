#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/autograd/optim.hpp"
#include "protofuse/corpus/dataset.hpp"
#include "protofuse/fusion/fusion.hpp"
#include "protofuse/metalearn/proto.hpp"

namespace protofuse::metalearn {

/// prototype: nearest-prototype classifier built from the K-shot set.
/// linear: one dense layer. feed_forward: dense + tanh + dense.
/// mldg: the meta-trained hidden layer plus a zero-initialized output layer.
/// protomaml: a dense layer initialized from the K-shot prototypes.
enum class HeadKind { prototype, linear, feed_forward, mldg, protomaml };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(std::string_view s);

struct FinetuneOptions {
  HeadKind head = HeadKind::linear;
  std::size_t epochs = 3;
  ag::ComponentRates rates{5e-5, 2e-5, 1e-4};
  double min_lr = 1e-5;
  std::size_t batch_size = 16;
  Distance distance = Distance::euclidean;
  std::uint64_t seed = 0;
};

struct FinetuneTrace {
  std::vector<double> lr;    // head-component rate at each step
  std::vector<double> loss;  // training loss at each step
};

/// A fine-tuned model together with its head, ready to predict.
struct Classifier {
  fusion::Model model;
  HeadKind head = HeadKind::linear;
  Distance distance = Distance::euclidean;
  corpus::DomainManifest manifest;
  std::optional<Prototypes> prototypes;
  FinetuneTrace trace;

  /// Class scores: logits for softmax heads, negative distances for the
  /// prototype head. No label information enters the inputs.
  ag::Matrix scores(std::span<const corpus::Example> examples) const;
  /// Highest score per example, lowest class index on ties.
  std::vector<std::size_t> predict(std::span<const corpus::Example> examples) const;
};

/// Fine-tunes a copy of `model` on a K-shot set. Softmax heads train with
/// cross-entropy in mini-batches under a per-step cosine schedule from each
/// component's rate down to min_lr. The prototype head trains on episodes
/// drawn from the K-shot set with the ProtoNet loss, then stores prototypes
/// of the whole set. Training inputs carry their gold label through the
/// fusion policy. Throws std::invalid_argument on an empty set.
Classifier supervised_finetune(const fusion::Model& model, const corpus::Dataset& kshot,
                               const FinetuneOptions& options);

/// Head logits for representation rows; exposed for tests.
ag::Var head_logits(const fusion::Model& model, HeadKind head, const ag::Var& reps);

}  // namespace protofuse::metalearn
