#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "mccws/corpus.hpp"

namespace mccws {

using SpanList = std::vector<Span>;

struct PrfCounts {
  std::size_t true_positives = 0;
  std::size_t pred_count = 0;
  std::size_t gold_count = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct OovCounts {
  std::size_t oov_total = 0;
  std::size_t oov_correct = 0;
  double oov_recall = 0;
  // Set when no gold span is out of vocabulary; oov_recall is then 0.
  bool vacuous = true;
};

struct EvalReport {
  std::string criterion;
  std::size_t true_positives = 0;
  std::size_t pred_count = 0;
  std::size_t gold_count = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t oov_total = 0;
  std::size_t oov_correct = 0;
  double oov_recall = 0;
};

// Fills precision/recall/f1 from the counts, guarding empty denominators.
PrfCounts finish_prf(std::size_t true_positives, std::size_t pred_count,
                     std::size_t gold_count);

// Micro-averaged word-level scores: a predicted span counts iff the same
// span exists in that sentence's gold. Throws std::invalid_argument when the
// sentence counts differ.
PrfCounts f1_score(std::span<const SpanList> gold, std::span<const SpanList> pred);

// Interface for the lexicon used in OOV accounting.
class Lexicon {
 public:
  virtual ~Lexicon() = default;
  virtual bool contains(std::string_view key) const = 0;
};

class SetLexicon : public Lexicon {
 public:
  SetLexicon() = default;
  explicit SetLexicon(std::unordered_set<std::string> words) : words_(std::move(words)) {}
  bool contains(std::string_view key) const override {
    return words_.contains(std::string(key));
  }

 private:
  std::unordered_set<std::string> words_;
};

// gold_keys[i][j] is the lexicon key of gold[i][j].
OovCounts oov_recall(std::span<const SpanList> gold, std::span<const SpanList> pred,
                     std::span<const std::vector<std::string>> gold_keys,
                     const Lexicon& lexicon);

EvalReport make_report(std::string criterion, const PrfCounts& prf, const OovCounts& oov);

// Arithmetic mean of the ratio fields across reports; counts are summed.
EvalReport mean_report(std::span<const EvalReport> reports, std::string label = "avg");

// Aligned plain-text table, one row per report.
void write_report_table(std::ostream& out, std::span<const EvalReport> reports);
// One JSON object per line with the fields criterion, precision, recall, f1,
// oov_recall, oov_total.
void write_report_records(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace mccws
