#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mccws {

// Half-open interval [begin, end) over token positions (or codepoints,
// depending on the caller's unit).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  auto operator<=>(const Span&) const = default;
};

enum class Label : std::uint8_t { B = 0, M = 1, E = 2, S = 3 };
inline constexpr std::size_t kLabelCount = 4;

using LabelSeq = std::vector<Label>;

char label_char(Label label);

// One gold-segmented line of a corpus file.
struct RawSentence {
  std::vector<std::string> words;
  int criterion_id = 0;
};

// A model-facing token with the codepoint range it covers in the source text.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// A preprocessed sentence. chars[t] and bigrams[t] refer to the same
// position; gold_spans partition [0, chars.size()).
struct Sentence {
  std::vector<int> chars;
  std::vector<int> bigrams;
  int criterion_id = 0;
  std::vector<Span> gold_spans;
  std::vector<std::string> tokens;

  std::size_t length() const { return chars.size(); }
};

// Maps U+FF01..U+FF5E to ASCII and U+3000 to U+0020. Length-preserving.
std::u32string normalize_width(std::u32string_view text);
std::string normalize_width(std::string_view text);

// Tokenizes width-normalized text: Latin letter runs become <eng>, digit
// runs become <num>, whitespace is dropped, every other codepoint is its own
// token.
std::vector<std::string> replace_runs(std::string_view text);

// normalize_width followed by replace_runs, keeping codepoint offsets into
// the original text.
std::vector<Token> tokenize(std::string_view text);

// Lexicon key of a gold word: its tokens after preprocessing, concatenated.
std::string word_key(std::string_view word);

bool is_partition(std::span<const Span> spans, std::size_t length);

// Throws std::invalid_argument unless `spans` partition [0, length).
LabelSeq encode_bmes(std::span<const Span> spans, std::size_t length);

// Total: repairs invalid label sequences left to right (an M/E with no open
// word opens one, S closes any open word, end of input closes it too).
std::vector<Span> decode_bmes(std::span<const Label> labels);

// Splits a whitespace-segmented line into words. Blank lines give no words.
std::vector<std::string> split_words(std::string_view line);

// Reads a whitespace-segmented corpus. Throws DataError naming the line for
// malformed UTF-8 and when the file cannot be read.
std::vector<RawSentence> load_corpus(const std::filesystem::path& path,
                                     int criterion_id);

// Tokenizes the concatenated words and projects word boundaries onto the
// token sequence. A boundary that falls inside a collapsed <eng>/<num> run is
// dropped, so the two words on either side merge.
struct TokenizedSentence {
  std::vector<Token> tokens;
  std::vector<Span> spans;
};
TokenizedSentence tokenize_gold(const RawSentence& sentence);

}  // namespace mccws
