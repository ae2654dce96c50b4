#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "protofuse/autograd/tensor.hpp"
#include "protofuse/corpus/dataset.hpp"
#include "protofuse/fusion/fusion.hpp"
#include "protofuse/metalearn/episode.hpp"
#include "protofuse/metalearn/learner.hpp"
#include "protofuse/metalearn/proto.hpp"

namespace protofuse::metalearn {

struct EpisodeLoss {
  ag::Var loss;         // mean query NLL, differentiable w.r.t. model params
  double accuracy = 0;  // fraction of queries whose nearest prototype is gold
};

/// ProtoNet loss of one episode. Support examples carry their gold label
/// through the fusion policy, queries carry none. Gradients reach every
/// parameter, prototypes included.
EpisodeLoss proto_episode_loss(const Episode& ep, const fusion::Model& model, Distance distance,
                               const fusion::RepresentOptions& opts = {});

struct StepResult {
  double loss = 0;
  double accuracy = 0;
  bool skipped = false;
  std::size_t k = 0;
  std::string domain_id;
};

/// First-order ProtoMAML on one episode. Leaves the outer gradient (query
/// loss gradient at the adapted parameters) in the grads of `model.params`;
/// the caller applies it. A non-finite inner loss skips the episode with
/// all grads cleared.
StepResult fo_protomaml_step(const Episode& ep, fusion::Model& model, const MetaConfig& config,
                             const fusion::RepresentOptions& opts = {});

/// Outer gradient of first-order MAML for any vector-like parameter type:
/// `steps` descent steps on the support gradient, then the query gradient at
/// the adapted point, with the inner updates treated as constants.
template <class T, class SupportGrad, class QueryGrad>
T fo_maml_gradient(T theta, SupportGrad support_grad, QueryGrad query_grad, double alpha,
                   std::size_t steps) {
  for (std::size_t s = 0; s < steps; ++s) theta = theta - alpha * support_grad(theta);
  return query_grad(theta);
}

/// First-order MLDG update: theta - gamma * (F'(theta) + beta * G'(theta - alpha F'(theta))).
template <class T, class GradF, class GradG>
T mldg_update(const T& theta, GradF grad_f, GradG grad_g, double alpha, double beta,
              double gamma) {
  const T gf = grad_f(theta);
  const T virtual_theta = theta - alpha * gf;
  const T gg = grad_g(virtual_theta);
  return theta - gamma * (gf + beta * gg);
}

/// Adds the shared MLDG hidden layer (head.mldg.hidden.*) when missing.
void ensure_mldg_hidden(fusion::Model& model, Rng& rng);

/// Per-task output layer: n_classes rows of a d_model -> 1 map, all zero.
struct MldgOutput {
  ag::Matrix weight;  // n_classes x d_model
  ag::RowVector bias;
};
MldgOutput mldg_head_build(std::size_t n_classes, std::size_t d_model);

/// MLDG task loss. The zero-initialized output layer is first fitted on the
/// (fixed) support features with max(1, inner_steps) gradient steps of size
/// 1/L, L being the smoothness bound of the softmax loss on those features;
/// the query cross-entropy is then taken through encoder and hidden layer
/// with the fitted output layer held constant.
EpisodeLoss mldg_task_loss(const Episode& ep, const fusion::Model& model, const MetaConfig& config,
                           const fusion::RepresentOptions& opts = {});

/// One first-order MLDG step. A single meta-test domain S' is drawn, the
/// others form S-bar; one task from each. Leaves grad F + beta * grad G in
/// `model.params`. Throws std::invalid_argument with fewer than two domains.
StepResult mldg_step(EpisodeSampler& sampler, fusion::Model& model, const MetaConfig& config,
                     Rng& dropout_rng);

struct MetaReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
  std::vector<double> task_loss;
  std::size_t episodes = 0;  // sampler calls
  std::size_t skipped = 0;
  std::size_t best_epoch = 0;
  ag::ParamStore best_params;
};

/// Runs meta_epochs x tasks_per_epoch steps of `algorithm`, updating
/// `state` in place with AdamW at the component rates. When `log` is set,
/// one JSON line {epoch, task, loss, k, domain_id} is written per step.
MetaReport meta_train(Algorithm algorithm, const std::vector<const corpus::Dataset*>& domains,
                      LearnerState& state, std::ostream* log = nullptr);

}  // namespace protofuse::metalearn
