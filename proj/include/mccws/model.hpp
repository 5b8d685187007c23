#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mccws/corpus.hpp"
#include "mccws/random.hpp"
#include "mccws/tape.hpp"
#include "mccws/tensor.hpp"

namespace mccws {

inline constexpr std::size_t kAllRows = std::numeric_limits<std::size_t>::max();

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t bigram_vocab_size = 0;
  std::size_t num_criteria = 1;

  std::size_t d_h = 64;
  std::size_t d_e = 32;
  std::size_t encoder_layers = 2;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  // Longest augmented input (criterion token included).
  std::size_t max_len = 128;
  double dropout = 0.1;
  double init_std = 0.02;
  double layer_norm_eps = std::is_same_v<Real, double> ? 1e-12 : 1e-6;

  // Ablation switches. Without bigrams the fusion layer is skipped and the
  // character rows of H feed the contextualizer directly.
  bool use_bigram = true;
  bool use_criterion_classifier = true;
  // Off only in tests that need a permutation-equivariant encoder.
  bool use_positions = true;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LinearParams {
  Parameter weight;  // [out x in]
  Parameter bias;    // [1 x out]
};

struct NormParams {
  Parameter gain;
  Parameter bias;
};

struct AttentionParams {
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LinearParams output;
};

struct EncoderLayerParams {
  AttentionParams attention;
  NormParams attention_norm;
  LinearParams ff_in;
  LinearParams ff_out;
  NormParams ff_norm;
};

// Gate inputs: h'_t = tanh(W_h h_t + b_h), e'_t = tanh(W_e e_t + b_e),
// g_t = sigmoid(W_fh h_t + W_fe e_t + b_f).
struct FusionParams {
  LinearParams hidden;         // W_h, b_h
  LinearParams bigram;         // W_e, b_e
  Parameter gate_hidden;       // W_fh
  Parameter gate_bigram;       // W_fe
  Parameter gate_bias;         // b_f
};

struct ModelParams {
  Parameter token_embedding;
  Parameter position_embedding;
  std::vector<EncoderLayerParams> layers;
  Parameter bigram_embedding;
  FusionParams fusion;
  AttentionParams context_attention;
  NormParams context_norm;
  LinearParams label_decoder;         // W_o [4 x d_h]
  LinearParams criterion_classifier;  // W_c [C x d_h]
};

// One sentence ready for the network.
struct Example {
  std::vector<int> augmented;  // criterion token + T token ids
  std::vector<int> bigrams;    // T bigram ids
  int criterion_id = 0;
  std::vector<int> labels;     // T gold labels, empty when unannotated

  std::size_t length() const { return bigrams.size(); }
};

// Padded batch. Row i holds lengths[i] real positions; the rest is padding
// (<pad> ids, mask 0).
struct Batch {
  std::size_t size = 0;
  std::size_t max_length = 0;
  std::vector<int> tokens;   // size x (max_length + 1)
  std::vector<int> bigrams;  // size x max_length
  std::vector<int> labels;   // size x max_length
  std::vector<std::uint8_t> mask;
  std::vector<int> criteria;
  std::vector<std::size_t> lengths;
  // Indices of the batch rows in the source corpus.
  std::vector<std::size_t> source_index;

  Example row(std::size_t i) const;
};

struct Fusion {
  Var fused;  // F [T x d_h]
  Var gate;   // g [T x d_h]
};

// Tape handles for every intermediate of one sentence's forward pass.
struct ForwardGraph {
  Var hidden;            // H [(T+1) x d_h]
  Var bigram_embedding;  // E [T x d_e], invalid without bigrams
  Var fused;             // F [T x d_h]
  Var gate;              // invalid without bigrams
  Var output;            // O [T x d_h]
  Var label_logits;      // [T x 4]
  Var criterion_logits;  // [1 x C]
};

struct ForwardOutput {
  Tensor hidden;
  Tensor fused;
  Tensor output;
  Tensor label_logits;
  Tensor criterion_logits;
  std::vector<Real> gate_means;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Every trainable tensor, in checkpoint order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  // Transformer encoder over the augmented ids. Keys at positions >= valid
  // are masked out of attention.
  Var encode(Tape& tape, std::span<const int> augmented, bool training, Rng& rng,
             std::size_t valid = kAllRows) const;
  Var embed_bigrams(Tape& tape, std::span<const int> bigrams) const;
  // hidden_rows are H rows 1..T (row 0 bypasses fusion).
  Fusion fuse(Tape& tape, Var hidden_rows, Var bigram_rows) const;
  // O = LayerNorm(MultiHead(F) + F). Per-head attention weights are
  // appended to `attention` when given.
  Var contextualize(Tape& tape, Var fused, bool training, Rng& rng,
                    std::size_t valid = kAllRows,
                    std::vector<Tensor>* attention = nullptr) const;
  Var decode_labels(Tape& tape, Var output) const;
  // Reads row 0 of H only.
  Var classify_criterion(Tape& tape, Var hidden) const;

  ForwardGraph build(Tape& tape, const Example& example, bool training, Rng& rng,
                     std::size_t valid = kAllRows) const;
  ForwardOutput forward(const Example& example) const;

  // Summed label NLL plus criterion NLL for one annotated sentence.
  Var sentence_loss(Tape& tape, const Example& example, bool training, Rng& rng) const;
  // Mean of sentence_loss over the batch rows (padding excluded).
  Var loss(Tape& tape, const Batch& batch, bool training, Rng& rng) const;

  // Greedy per-position argmax, ties to the lower label.
  LabelSeq predict_labels(const Example& example) const;
  int predict_criterion(const Example& example) const;

 private:
  Var attend(Tape& tape, const AttentionParams& p, Var x, std::size_t valid,
             std::vector<Tensor>* attention) const;
  Var linear(Tape& tape, const LinearParams& p, Var x) const;
  Var norm(Tape& tape, const NormParams& p, Var x) const;

  ModelConfig config_;
  ModelParams params_;
};

LabelSeq argmax_labels(const Tensor& label_logits);

}  // namespace mccws
