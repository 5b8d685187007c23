#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mccws/corpus.hpp"
#include "mccws/metrics.hpp"
#include "mccws/model.hpp"
#include "mccws/optim.hpp"
#include "mccws/vocab.hpp"

namespace mccws {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  // Evaluate on dev every this many epochs (and always after the last one).
  std::size_t eval_every = 1;
  double lr = 2e-5;
  double warmup_ratio = 0.1;
  AdamWConfig adamw;

  void validate() const;
};

// One line of the metrics log.
struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;      // "train" or "dev"
  std::string criterion;  // "*" for records that span every criterion
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double oov_recall = 0;
  std::size_t oov_total = 0;
  double loss = 0;
  double criterion_accuracy = 0;
};

std::string to_json_line(const MetricRecord& record);

// Batches in a seeded shuffled order; the last batch may be short.
std::vector<Batch> make_batches(std::span<const Example> examples, std::size_t batch_size,
                                std::uint64_t seed);
// Pads the selected examples into one batch.
Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices);

// Splits a sentence at word boundaries so every piece has at most
// max_tokens tokens. A single word longer than that is cut into chunks.
std::vector<RawSentence> split_overlong(const RawSentence& sentence, std::size_t max_tokens);

struct SentenceEvaluation {
  std::vector<EvalReport> reports;           // one per criterion present
  std::vector<double> criterion_accuracy;    // aligned with reports
  std::vector<double> loss;                  // mean sentence loss, aligned
  double mean_f1 = 0;
};

// Scores greedy predictions against gold token spans, grouped by criterion.
SentenceEvaluation evaluate_sentences(const Model& model, const Vocab& vocab,
                                      std::span<const Sentence> sentences);

struct TrainResult {
  Model model;  // best dev checkpoint (last epoch when there is no dev set)
  std::size_t best_epoch = 0;
  std::vector<MetricRecord> log;
  AdamWState optimizer;
  std::size_t steps = 0;
};

using RecordSink = std::function<void(const MetricRecord&)>;

// Throws DivergenceError when a batch loss is not finite.
TrainResult train(Model model, const Vocab& vocab, std::span<const Sentence> train_set,
                  std::span<const Sentence> dev_set, const TrainConfig& config,
                  const RecordSink& sink = {});

// Label accuracy of greedy predictions over every position.
double label_accuracy(const Model& model, const Vocab& vocab, std::span<const Sentence> sentences);

}  // namespace mccws
