#include "mccws/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include "mccws/errors.hpp"
#include "mccws/utf8.hpp"

namespace mccws {
namespace {

enum class CharClass { Latin, Digit, Space, Other };

CharClass classify(char32_t cp) {
  if ((cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z')) {
    return CharClass::Latin;
  }
  if (cp >= U'0' && cp <= U'9') return CharClass::Digit;
  if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\v' ||
      cp == U'\f') {
    return CharClass::Space;
  }
  return CharClass::Other;
}

bool is_separator(char32_t cp) {
  return cp == 0x3000 || classify(cp) == CharClass::Space;
}

}  // namespace

char label_char(Label label) {
  static constexpr char kChars[] = {'B', 'M', 'E', 'S'};
  return kChars[static_cast<std::size_t>(label)];
}

std::u32string normalize_width(std::u32string_view text) {
  std::u32string out(text);
  for (char32_t& cp : out) {
    if (cp >= 0xFF01 && cp <= 0xFF5E) {
      cp -= 0xFEE0;
    } else if (cp == 0x3000) {
      cp = 0x20;
    }
  }
  return out;
}

std::string normalize_width(std::string_view text) {
  return utf8::encode(normalize_width(utf8::decode(text)));
}

std::vector<Token> tokenize(std::string_view text) {
  const std::u32string cps = normalize_width(utf8::decode(text));
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    const CharClass cls = classify(cps[i]);
    if (cls == CharClass::Space) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    Token token;
    if (cls == CharClass::Latin || cls == CharClass::Digit) {
      while (j < cps.size() && classify(cps[j]) == cls) ++j;
      token.text = cls == CharClass::Latin ? "<eng>" : "<num>";
    } else {
      utf8::append(token.text, cps[i]);
    }
    token.begin = i;
    token.end = j;
    tokens.push_back(std::move(token));
    i = j;
  }
  return tokens;
}

std::vector<std::string> replace_runs(std::string_view text) {
  std::vector<std::string> out;
  for (Token& token : tokenize(text)) out.push_back(std::move(token.text));
  return out;
}

std::string word_key(std::string_view word) {
  std::string key;
  for (const Token& token : tokenize(word)) key += token.text;
  return key;
}

bool is_partition(std::span<const Span> spans, std::size_t length) {
  std::size_t cursor = 0;
  for (const Span& span : spans) {
    if (span.begin != cursor || span.end <= span.begin) return false;
    cursor = span.end;
  }
  return cursor == length;
}

LabelSeq encode_bmes(std::span<const Span> spans, std::size_t length) {
  if (!is_partition(spans, length)) {
    throw std::invalid_argument("spans do not partition [0, " +
                                std::to_string(length) + ")");
  }
  LabelSeq labels(length, Label::M);
  for (const Span& span : spans) {
    if (span.length() == 1) {
      labels[span.begin] = Label::S;
    } else {
      labels[span.begin] = Label::B;
      labels[span.end - 1] = Label::E;
    }
  }
  return labels;
}

std::vector<Span> decode_bmes(std::span<const Label> labels) {
  std::vector<Span> spans;
  bool open = false;
  std::size_t start = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    switch (labels[t]) {
      case Label::B:
        if (open) spans.push_back({start, t});
        open = true;
        start = t;
        break;
      case Label::M:
        if (!open) {
          open = true;
          start = t;
        }
        break;
      case Label::E:
        if (!open) start = t;
        spans.push_back({start, t + 1});
        open = false;
        break;
      case Label::S:
        if (open) spans.push_back({start, t});
        spans.push_back({t, t + 1});
        open = false;
        break;
    }
  }
  if (open) spans.push_back({start, labels.size()});
  return spans;
}

std::vector<std::string> split_words(std::string_view line) {
  const std::u32string cps = utf8::decode(line);
  std::vector<std::string> words;
  std::u32string current;
  for (char32_t cp : cps) {
    if (is_separator(cp)) {
      if (!current.empty()) words.push_back(utf8::encode(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(utf8::encode(current));
  return words;
}

std::vector<RawSentence> load_corpus(const std::filesystem::path& path,
                                     int criterion_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  std::vector<RawSentence> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (const auto bad = utf8::find_invalid(line)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": invalid UTF-8 at byte " + std::to_string(*bad));
    }
    std::vector<std::string> words = split_words(line);
    if (words.empty()) continue;
    sentences.push_back({std::move(words), criterion_id});
  }
  if (in.bad()) throw DataError("error reading " + path.string());
  return sentences;
}

TokenizedSentence tokenize_gold(const RawSentence& sentence) {
  std::string text;
  std::vector<std::size_t> word_starts;
  std::size_t offset = 0;
  for (const std::string& word : sentence.words) {
    word_starts.push_back(offset);
    offset += utf8::decode(word).size();
    text += word;
  }
  TokenizedSentence out;
  out.tokens = tokenize(text);
  std::size_t next_word = 1;
  std::size_t open = 0;
  for (std::size_t t = 1; t < out.tokens.size(); ++t) {
    const std::size_t begin = out.tokens[t].begin;
    while (next_word < word_starts.size() && word_starts[next_word] < begin) {
      ++next_word;
    }
    if (next_word < word_starts.size() && word_starts[next_word] == begin) {
      out.spans.push_back({open, t});
      open = t;
    }
  }
  if (!out.tokens.empty()) out.spans.push_back({open, out.tokens.size()});
  return out;
}

}  // namespace mccws
