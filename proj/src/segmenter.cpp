#include "mccws/segmenter.hpp"

#include <algorithm>

#include "mccws/utf8.hpp"

namespace mccws {

Example make_example(const Vocab& vocab, const Sentence& sentence) {
  Example ex;
  ex.augmented = augment(vocab, sentence);
  ex.bigrams = sentence.bigrams;
  ex.criterion_id = sentence.criterion_id;
  if (!sentence.gold_spans.empty()) {
    for (Label l : encode_bmes(sentence.gold_spans, sentence.length())) {
      ex.labels.push_back(static_cast<int>(l));
    }
  }
  return ex;
}

std::vector<Span> predict_spans(const Model& model, const Vocab& vocab,
                                const Sentence& sentence) {
  if (sentence.length() == 0) return {};
  return decode_bmes(model.predict_labels(make_example(vocab, sentence)));
}

Segmenter::Segmenter(const Model& model, const Vocab& vocab) : model_(model), vocab_(vocab) {}

std::size_t Segmenter::token_count(std::string_view text) const {
  return tokenize(text).size();
}

std::vector<Span> Segmenter::segment_spans(std::string_view text, int criterion_id) const {
  const std::vector<Token> tokens = tokenize(text);
  const std::size_t window = model_.config().max_len - 1;
  std::vector<Span> out;
  for (std::size_t start = 0; start < tokens.size(); start += window) {
    const std::size_t stop = std::min(tokens.size(), start + window);
    const std::span<const Token> part(tokens.data() + start, stop - start);
    const Sentence sentence = vocab_.make_sentence(part, criterion_id);
    for (const Span& s : predict_spans(model_, vocab_, sentence)) {
      out.push_back({part[s.begin].begin, part[s.end - 1].end});
    }
  }
  return out;
}

std::vector<std::string> Segmenter::segment(std::string_view text,
                                            std::string_view criterion) const {
  const int criterion_id = vocab_.criterion_id(criterion);
  if (text.empty()) return {};
  const std::u32string cps = utf8::decode(text);
  std::vector<std::string> words;
  for (const Span& span : segment_spans(text, criterion_id)) {
    std::u32string word;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      const char32_t cp = cps[i];
      if (cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\n' || cp == U'\v' ||
          cp == U'\f' || cp == 0x3000) {
        continue;
      }
      word.push_back(cp);
    }
    words.push_back(utf8::encode(word));
  }
  return words;
}

}  // namespace mccws
