#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/autograd/tensor.hpp"
#include "protofuse/corpus/dataset.hpp"
#include "protofuse/encoder/encoder.hpp"
#include "protofuse/encoder/vocab.hpp"

namespace protofuse::fusion {

enum class FusionKind { none, token, label, full, joint };
/// literal: V comes from the text states (Q = V = H_T, K = H_D).
/// standard: V comes from the definition states (K = V = H_D).
enum class JointVariant { literal, standard };

std::string to_string(FusionKind kind);
std::string to_string(JointVariant variant);
FusionKind fusion_kind_from_string(std::string_view s);
JointVariant joint_variant_from_string(std::string_view s);

struct FusionStrategy {
  FusionKind kind = FusionKind::none;
  std::size_t joint_heads = 3;
  JointVariant variant = JointVariant::literal;

  void validate(std::size_t d_model) const;
  bool operator==(const FusionStrategy&) const = default;
};

/// "L : D", the string encoded as H_D for joint fusion.
std::string label_definition_text(const corpus::LabelDef& label);

/// Token ids for the text-side input of kinds none/token/label/full:
///   none  [CLS] T [SEP]
///   token [CLS] T [SEP] E_L [SEP]
///   label [CLS] T L [SEP]
///   full  [CLS] T [SEP] L : D [SEP]
/// An absent label leaves the label region empty, which reduces every kind
/// to [CLS] T [SEP]. Kind joint frames the text alone. Throws when the label
/// is not part of `manifest` or its label token was never registered.
encoder::TokenSequence fuse_input(std::string_view text, const corpus::LabelDef* label,
                                  const corpus::DomainManifest& manifest,
                                  const FusionStrategy& strategy, const encoder::Vocab& vocab,
                                  std::size_t max_len);

/// Definition-side sequence for joint fusion: tokenized "L : D", or the
/// blank string ([CLS] [SEP]) when the label is absent.
encoder::TokenSequence definition_input(const corpus::LabelDef* label,
                                        const encoder::Vocab& vocab, std::size_t max_len);

/// Adds joint.wq/wk/wv/wo (d x d each) to the store.
void init_joint_params(ag::ParamStore& params, std::size_t d_model, Rng& rng);

/// Batched cross attention. `text` rows are queries, `def` rows keys; the
/// value source depends on the variant. With `cls_only` only the [CLS]
/// query row of each sequence is computed. Key validity comes from
/// def.mask. Returns (batch * q_len) x d.
ag::Var joint_attention(const ag::ParamStore& params, const encoder::BatchStates& text,
                        const encoder::BatchStates& def, std::size_t heads, JointVariant variant,
                        bool cls_only);

/// Single-sequence cross attention over hidden states of equal padded
/// length. Output has the same length; its row 0 is the representation.
encoder::HiddenStates joint_embed(const encoder::HiddenStates& h_text,
                                  const encoder::HiddenStates& h_def, const ag::ParamStore& params,
                                  std::size_t heads, JointVariant variant);

/// Attention probabilities of joint_embed for one head (len x len).
ag::Matrix joint_attention_weights(const encoder::HiddenStates& h_text,
                                   const encoder::HiddenStates& h_def,
                                   const ag::ParamStore& params, std::size_t heads,
                                   std::size_t head);

/// Encoder, fusion strategy, vocabulary and every trainable parameter.
struct Model {
  encoder::EncoderConfig encoder;
  FusionStrategy fusion;
  encoder::Vocab vocab;
  ag::ParamStore params;

  /// Fresh encoder (and joint block when fusion is joint), seeded by
  /// encoder.seed.
  static Model create(const encoder::EncoderConfig& cfg, const FusionStrategy& fusion,
                      encoder::Vocab vocab);

  /// Registers label tokens for kind token. No-op for other kinds.
  void prepare_domain(const corpus::DomainManifest& manifest);

  Model clone() const;
};

/// Vocabulary over texts plus every label name and "L : D" string.
encoder::Vocab build_model_vocab(const std::vector<const corpus::Dataset*>& domains,
                                 std::size_t max_size);

struct RepresentOptions {
  bool train = false;
  Rng* rng = nullptr;
};

/// Representation vectors (batch x d_model) with gradients. `gold[i]` is the
/// label fused into example i, or nullopt for the empty label region / blank
/// definition.
ag::Var represent(const Model& model, const corpus::DomainManifest& manifest,
                  std::span<const corpus::Example> examples,
                  std::span<const std::optional<std::size_t>> gold,
                  const RepresentOptions& opts = {});

/// Representations for unlabeled inputs.
ag::Var represent_unlabeled(const Model& model, const corpus::DomainManifest& manifest,
                            std::span<const corpus::Example> examples,
                            const RepresentOptions& opts = {});

/// Inference-only representations, computed in chunks of `chunk` examples.
ag::Matrix represent_values(const Model& model, const corpus::DomainManifest& manifest,
                            std::span<const corpus::Example> examples, bool with_gold,
                            std::size_t chunk = 64);

}  // namespace protofuse::fusion
