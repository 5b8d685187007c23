#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mccws/corpus.hpp"

namespace mccws {

// Token, bigram and criterion tables. Ids are dense from 0. The first
// kReservedCount unigram ids are fixed, followed by one <name> token per
// criterion, followed by corpus tokens by descending frequency.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEng = 3;
  static constexpr int kNum = 4;
  static constexpr int kReservedCount = 5;

  static constexpr int kBigramPad = 0;
  static constexpr int kBigramUnk = 1;

  static constexpr int kFormatVersion = 1;

  // `train` must only contain training-split sentences; their criterion ids
  // index into `criteria`.
  static Vocab build(std::vector<std::string> criteria,
                     std::span<const RawSentence> train);

  std::size_t unigram_size() const { return unigrams_.size(); }
  std::size_t bigram_size() const { return bigrams_.size(); }
  std::size_t criterion_count() const { return criteria_.size(); }

  const std::vector<std::string>& criteria() const { return criteria_; }
  const std::string& criterion_name(int id) const;
  // Throws ConfigError listing the registered criteria.
  int criterion_id(std::string_view name) const;
  int criterion_token(int criterion_id) const;
  bool is_criterion_token(int token_id) const;

  // Unknown strings map to kUnk / kBigramUnk.
  int unigram_id(std::string_view token) const;
  const std::string& unigram(int id) const;
  int bigram_id(std::string_view left, std::string_view right) const;
  static std::string bigram_key(std::string_view left, std::string_view right);

  // Training-split word types, as word_key() strings.
  bool in_lexicon(std::string_view key) const;
  std::size_t lexicon_size() const { return lexicon_.size(); }

  // Fingerprints of the corpora the tables were built from, by criterion.
  const std::map<std::string, std::string>& sources() const { return sources_; }
  void set_source(const std::string& criterion, std::string fingerprint);

  Sentence make_sentence(const RawSentence& raw) const;
  // Unannotated text; gold_spans is left empty.
  Sentence make_sentence(std::span<const Token> tokens, int criterion_id) const;

  void save(std::ostream& out) const;
  std::string serialize() const;
  static Vocab load(std::istream& in);
  static Vocab load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // FNV-1a of serialize(); carried by checkpoints.
  std::uint64_t hash() const;

  bool operator==(const Vocab& other) const;

 private:
  void index();

  std::vector<std::string> unigrams_;
  std::vector<std::string> bigrams_;
  std::vector<std::string> criteria_;
  std::vector<std::string> lexicon_;
  std::map<std::string, std::string> sources_;

  std::unordered_map<std::string, int> unigram_index_;
  std::unordered_map<std::string, int> bigram_index_;
  std::unordered_map<std::string, int> criterion_index_;
  std::unordered_set<std::string> lexicon_index_;
};

// Criterion token followed by the sentence's token ids (length T + 1).
std::vector<int> augment(const Vocab& vocab, const Sentence& sentence);

// Bigram ids for (token t-1, token t); position 0 pairs with <bos>.
std::vector<int> make_bigrams(const Vocab& vocab, std::span<const int> chars);

}  // namespace mccws
