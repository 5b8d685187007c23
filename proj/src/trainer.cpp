#include "mccws/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "mccws/errors.hpp"
#include "mccws/segmenter.hpp"
#include "mccws/utf8.hpp"

namespace mccws {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (!(lr >= 0)) throw ConfigError("learning rate must be non-negative");
  if (!(warmup_ratio >= 0 && warmup_ratio < 1)) throw ConfigError("warmup_ratio must be in [0, 1)");
}

std::string to_json_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["criterion"] = r.criterion;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["oov_recall"] = r.oov_recall;
  j["oov_total"] = r.oov_total;
  j["loss"] = r.loss;
  j["criterion_accuracy"] = r.criterion_accuracy;
  return j.dump();
}

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  for (std::size_t i : indices) b.max_length = std::max(b.max_length, examples[i].length());
  const std::size_t L = b.max_length;
  b.tokens.assign(b.size * (L + 1), Vocab::kPad);
  b.bigrams.assign(b.size * L, Vocab::kBigramPad);
  b.labels.assign(b.size * L, 0);
  b.mask.assign(b.size * L, 0);
  for (std::size_t r = 0; r < b.size; ++r) {
    const Example& ex = examples[indices[r]];
    const std::size_t T = ex.length();
    std::copy(ex.augmented.begin(), ex.augmented.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(r * (L + 1)));
    std::copy(ex.bigrams.begin(), ex.bigrams.end(), b.bigrams.begin() + static_cast<std::ptrdiff_t>(r * L));
    if (!ex.labels.empty()) {
      std::copy(ex.labels.begin(), ex.labels.end(), b.labels.begin() + static_cast<std::ptrdiff_t>(r * L));
    }
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * L), T, std::uint8_t{1});
    b.criteria.push_back(ex.criterion_id);
    b.lengths.push_back(T);
    b.source_index.push_back(indices[r]);
  }
  return b;
}

std::vector<Batch> make_batches(std::span<const Example> examples, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(examples, std::span<const std::size_t>(order).subspan(start, stop - start)));
  }
  return batches;
}

std::vector<RawSentence> split_overlong(const RawSentence& sentence, std::size_t max_tokens) {
  if (max_tokens == 0) throw std::invalid_argument("max_tokens must be >= 1");
  std::vector<RawSentence> pieces;
  RawSentence current{{}, sentence.criterion_id};
  std::size_t current_tokens = 0;
  auto flush = [&] {
    if (!current.words.empty()) pieces.push_back(std::move(current));
    current = RawSentence{{}, sentence.criterion_id};
    current_tokens = 0;
  };
  for (const std::string& word : sentence.words) {
    const std::vector<Token> toks = tokenize(word);
    if (toks.size() > max_tokens) {
      flush();
      const std::u32string cps = utf8::decode(word);
      // Cut the word itself at token boundaries.
      std::size_t i = 0;
      while (i < toks.size()) {
        const std::size_t j = std::min(toks.size(), i + max_tokens);
        const std::string chunk =
            utf8::encode(std::u32string_view(cps).substr(toks[i].begin, toks[j - 1].end - toks[i].begin));
        pieces.push_back({{chunk}, sentence.criterion_id});
        i = j;
      }
      continue;
    }
    if (current_tokens + toks.size() > max_tokens) flush();
    current.words.push_back(word);
    current_tokens += toks.size();
  }
  flush();
  return pieces;
}

SentenceEvaluation evaluate_sentences(const Model& model, const Vocab& vocab,
                                      std::span<const Sentence> sentences) {
  struct Group {
    std::vector<SpanList> gold, pred;
    std::vector<std::vector<std::string>> keys;
    std::size_t correct_criterion = 0;
    double loss = 0;
  };
  std::map<int, Group> groups;
  for (const Sentence& s : sentences) {
    Group& g = groups[s.criterion_id];
    std::vector<std::string> keys;
    for (const Span& span : s.gold_spans) {
      std::string key;
      for (std::size_t t = span.begin; t < span.end; ++t) key += s.tokens[t];
      keys.push_back(std::move(key));
    }
    g.keys.push_back(std::move(keys));
    g.gold.push_back(s.gold_spans);
    if (s.length() == 0) {
      g.pred.emplace_back();
      continue;
    }
    const Example ex = make_example(vocab, s);
    const ForwardOutput out = model.forward(ex);
    g.pred.push_back(decode_bmes(argmax_labels(out.label_logits)));

    Tape tape(false);
    Var logits = tape.constant(out.label_logits);
    double loss = tape.value(tape.cross_entropy(logits, ex.labels, {}, Reduction::Sum))[0];
    if (out.criterion_logits.size() > 0) {
      const int target[] = {s.criterion_id};
      loss += tape.value(tape.cross_entropy(tape.constant(out.criterion_logits), target))[0];
      auto d = out.criterion_logits.data();
      if (std::max_element(d.begin(), d.end()) - d.begin() == s.criterion_id) {
        ++g.correct_criterion;
      }
    }
    g.loss += loss;
  }
  SentenceEvaluation result;
  const VocabLexicon lexicon(vocab);
  for (auto& [criterion, g] : groups) {
    const PrfCounts prf = f1_score(g.gold, g.pred);
    const OovCounts oov = oov_recall(g.gold, g.pred, g.keys, lexicon);
    result.reports.push_back(make_report(vocab.criterion_name(criterion), prf, oov));
    const double n = static_cast<double>(g.gold.size());
    result.criterion_accuracy.push_back(static_cast<double>(g.correct_criterion) / n);
    result.loss.push_back(g.loss / n);
  }
  if (!result.reports.empty()) result.mean_f1 = mean_report(result.reports).f1;
  return result;
}

double label_accuracy(const Model& model, const Vocab& vocab, std::span<const Sentence> sentences) {
  std::size_t correct = 0, total = 0;
  for (const Sentence& s : sentences) {
    if (s.length() == 0) continue;
    const Example ex = make_example(vocab, s);
    const LabelSeq pred = model.predict_labels(ex);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      correct += static_cast<int>(pred[t]) == ex.labels[t];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(Model model, const Vocab& vocab, std::span<const Sentence> train_set,
                  std::span<const Sentence> dev_set, const TrainConfig& config,
                  const RecordSink& sink) {
  config.validate();
  TrainResult result{model, 0, {}, {}, 0};
  if (config.epochs == 0) return result;
  if (train_set.empty()) throw DataError("training set is empty");

  std::vector<Example> examples;
  examples.reserve(train_set.size());
  for (const Sentence& s : train_set) {
    if (s.length() == 0) continue;
    if (s.length() + 1 > model.config().max_len) {
      throw DataError("training sentence of " + std::to_string(s.length()) +
                      " tokens exceeds max_len; split it first");
    }
    examples.push_back(make_example(vocab, s));
  }
  if (examples.empty()) throw DataError("training set has no non-empty sentences");

  const std::size_t batches_per_epoch = (examples.size() + config.batch_size - 1) / config.batch_size;
  const Schedule schedule(config.lr, config.epochs * batches_per_epoch, config.warmup_ratio);
  AdamW optimizer(model.parameters(), config.adamw);
  auto emit = [&](MetricRecord r) {
    if (sink) sink(r);
    result.log.push_back(std::move(r));
  };

  double best_f1 = -1;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<Batch> batches =
        make_batches(examples, config.batch_size, derive_seed(config.seed, epoch));
    Rng dropout_rng(derive_seed(config.seed, 0x100000 + epoch));
    double loss_sum = 0;
    for (const Batch& batch : batches) {
      Tape tape;
      const Var loss = model.loss(tape, batch, true, dropout_rng);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step + 1));
      }
      const Gradients grads = tape.backward(loss);
      ++step;
      optimizer.step(grads, schedule.lr_at(step));
      loss_sum += value * static_cast<double>(batch.size);
    }
    MetricRecord train_record;
    train_record.epoch = epoch;
    train_record.split = "train";
    train_record.criterion = "*";
    train_record.loss = loss_sum / static_cast<double>(examples.size());
    emit(train_record);

    const bool evaluate = !dev_set.empty() &&
                          (epoch % config.eval_every == 0 || epoch == config.epochs);
    if (evaluate) {
      const SentenceEvaluation ev = evaluate_sentences(model, vocab, dev_set);
      for (std::size_t i = 0; i < ev.reports.size(); ++i) {
        const EvalReport& rep = ev.reports[i];
        MetricRecord r;
        r.epoch = epoch;
        r.split = "dev";
        r.criterion = rep.criterion;
        r.precision = rep.precision;
        r.recall = rep.recall;
        r.f1 = rep.f1;
        r.oov_recall = rep.oov_recall;
        r.oov_total = rep.oov_total;
        r.loss = ev.loss[i];
        r.criterion_accuracy = ev.criterion_accuracy[i];
        emit(r);
      }
      if (ev.mean_f1 > best_f1) {
        best_f1 = ev.mean_f1;
        result.model = model;
        result.best_epoch = epoch;
      }
    }
  }
  if (dev_set.empty()) {
    result.model = model;
    result.best_epoch = config.epochs;
  }
  result.optimizer = optimizer.state();
  result.steps = step;
  return result;
}

}  // namespace mccws
