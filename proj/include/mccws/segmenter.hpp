#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mccws/corpus.hpp"
#include "mccws/metrics.hpp"
#include "mccws/model.hpp"
#include "mccws/vocab.hpp"

namespace mccws {

// Network input for a sentence; labels are filled from gold_spans when
// present.
Example make_example(const Vocab& vocab, const Sentence& sentence);

// Greedy label prediction followed by BMES repair, in token spans.
std::vector<Span> predict_spans(const Model& model, const Vocab& vocab,
                                const Sentence& sentence);

// The training lexicon of a Vocab, as seen by the OOV scorer.
class VocabLexicon : public Lexicon {
 public:
  explicit VocabLexicon(const Vocab& vocab) : vocab_(vocab) {}
  bool contains(std::string_view key) const override { return vocab_.in_lexicon(key); }

 private:
  const Vocab& vocab_;
};

// End-to-end inference over raw text. Holds references; the model and vocab
// must outlive it. Safe to share across threads.
class Segmenter {
 public:
  Segmenter(const Model& model, const Vocab& vocab);

  // Words as substrings of the original text (whitespace removed, <eng>/<num>
  // runs emitted verbatim). Text longer than the model's window is segmented
  // in consecutive windows. Throws ConfigError for unknown criteria.
  std::vector<std::string> segment(std::string_view text, std::string_view criterion) const;

  // Word spans in codepoints of `text`.
  std::vector<Span> segment_spans(std::string_view text, int criterion_id) const;

  // Tokens the model would see for `text`, criterion token excluded.
  std::size_t token_count(std::string_view text) const;

 private:
  const Model& model_;
  const Vocab& vocab_;
};

}  // namespace mccws
