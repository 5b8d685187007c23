#include "mccws/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mccws/errors.hpp"
#include "mccws/hash.hpp"

namespace mccws {
namespace {

constexpr const char* kReservedNames[Vocab::kReservedCount] = {
    "<pad>", "<unk>", "<bos>", "<eng>", "<num>"};

std::vector<std::string> by_frequency(
    const std::unordered_map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(),
                                                           counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (auto& e : entries) out.push_back(std::move(e.first));
  return out;
}

std::string criterion_token_text(const std::string& name) {
  return "<" + name + ">";
}

void write_section(std::ostream& out, const char* name,
                   const std::vector<std::string>& items) {
  out << '[' << name << "] " << items.size() << '\n';
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << items[i] << '\t' << i << '\n';
  }
}

std::vector<std::string> read_section(std::istream& in, const char* name) {
  std::string header;
  if (!std::getline(in, header)) {
    throw DataError(std::string("vocab: missing section ") + name);
  }
  const std::string prefix = std::string("[") + name + "] ";
  if (header.rfind(prefix, 0) != 0) {
    throw DataError("vocab: expected section " + prefix + ", got '" + header +
                    "'");
  }
  const std::size_t count = std::stoull(header.substr(prefix.size()));
  std::vector<std::string> items;
  items.reserve(count);
  std::string line;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw DataError(std::string("vocab: truncated section ") + name);
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || std::stoull(line.substr(tab + 1)) != i) {
      throw DataError(std::string("vocab: non-dense id in section ") + name +
                      ": '" + line + "'");
    }
    items.push_back(line.substr(0, tab));
  }
  return items;
}

}  // namespace

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

Vocab Vocab::build(std::vector<std::string> criteria,
                   std::span<const RawSentence> train) {
  if (criteria.empty()) throw ConfigError("vocab needs at least one criterion");
  Vocab v;
  v.criteria_ = std::move(criteria);
  for (const char* name : kReservedNames) v.unigrams_.emplace_back(name);
  for (const std::string& c : v.criteria_) {
    if (c.empty() || c.find_first_of(" \t\n<>") != std::string::npos) {
      throw ConfigError("invalid criterion name '" + c + "'");
    }
    v.unigrams_.push_back(criterion_token_text(c));
  }
  v.bigrams_ = {"<pad>", "<unk>"};

  std::unordered_map<std::string, std::size_t> unigram_counts;
  std::unordered_map<std::string, std::size_t> bigram_counts;
  std::unordered_set<std::string> lexicon;
  for (const RawSentence& raw : train) {
    if (raw.criterion_id < 0 ||
        static_cast<std::size_t>(raw.criterion_id) >= v.criteria_.size()) {
      throw ConfigError("sentence tagged with unregistered criterion id " +
                        std::to_string(raw.criterion_id));
    }
    const TokenizedSentence ts = tokenize_gold(raw);
    std::string_view prev = kReservedNames[kBos];
    for (const Token& tok : ts.tokens) {
      ++unigram_counts[tok.text];
      ++bigram_counts[bigram_key(prev, tok.text)];
      prev = tok.text;
    }
    for (const std::string& word : raw.words) lexicon.insert(word_key(word));
  }
  for (auto& tok : by_frequency(unigram_counts)) {
    if (tok == "<eng>" || tok == "<num>") continue;
    v.unigrams_.push_back(std::move(tok));
  }
  for (auto& bi : by_frequency(bigram_counts)) v.bigrams_.push_back(std::move(bi));
  v.lexicon_.assign(lexicon.begin(), lexicon.end());
  std::sort(v.lexicon_.begin(), v.lexicon_.end());
  v.index();
  return v;
}

void Vocab::index() {
  unigram_index_.clear();
  bigram_index_.clear();
  criterion_index_.clear();
  for (std::size_t i = 0; i < unigrams_.size(); ++i) {
    unigram_index_.emplace(unigrams_[i], static_cast<int>(i));
  }
  for (std::size_t i = 0; i < bigrams_.size(); ++i) {
    bigram_index_.emplace(bigrams_[i], static_cast<int>(i));
  }
  for (std::size_t i = 0; i < criteria_.size(); ++i) {
    if (!criterion_index_.emplace(criteria_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate criterion '" + criteria_[i] + "'");
    }
  }
  lexicon_index_ = {lexicon_.begin(), lexicon_.end()};
}

const std::string& Vocab::criterion_name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= criteria_.size()) {
    throw ConfigError("unknown criterion id " + std::to_string(id));
  }
  return criteria_[static_cast<std::size_t>(id)];
}

int Vocab::criterion_id(std::string_view name) const {
  const auto it = criterion_index_.find(std::string(name));
  if (it == criterion_index_.end()) {
    std::string known;
    for (const auto& c : criteria_) known += (known.empty() ? "" : ", ") + c;
    throw ConfigError("unknown criterion '" + std::string(name) +
                      "'; registered: " + known);
  }
  return it->second;
}

int Vocab::criterion_token(int criterion_id) const {
  criterion_name(criterion_id);
  return kReservedCount + criterion_id;
}

bool Vocab::is_criterion_token(int token_id) const {
  return token_id >= kReservedCount &&
         token_id < kReservedCount + static_cast<int>(criteria_.size());
}

int Vocab::unigram_id(std::string_view token) const {
  const auto it = unigram_index_.find(std::string(token));
  return it == unigram_index_.end() ? kUnk : it->second;
}

const std::string& Vocab::unigram(int id) const {
  return unigrams_.at(static_cast<std::size_t>(id));
}

std::string Vocab::bigram_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left).push_back(' ');
  key.append(right);
  return key;
}

int Vocab::bigram_id(std::string_view left, std::string_view right) const {
  const auto it = bigram_index_.find(bigram_key(left, right));
  return it == bigram_index_.end() ? kBigramUnk : it->second;
}

bool Vocab::in_lexicon(std::string_view key) const {
  return lexicon_index_.contains(std::string(key));
}

void Vocab::set_source(const std::string& criterion, std::string fingerprint) {
  criterion_id(criterion);
  sources_[criterion] = std::move(fingerprint);
}

Sentence Vocab::make_sentence(std::span<const Token> tokens,
                              int criterion_id) const {
  criterion_name(criterion_id);
  Sentence s;
  s.criterion_id = criterion_id;
  s.chars.reserve(tokens.size());
  for (const Token& tok : tokens) {
    s.chars.push_back(unigram_id(tok.text));
    s.tokens.push_back(tok.text);
  }
  s.bigrams = make_bigrams(*this, s.chars);
  return s;
}

Sentence Vocab::make_sentence(const RawSentence& raw) const {
  TokenizedSentence ts = tokenize_gold(raw);
  Sentence s = make_sentence(ts.tokens, raw.criterion_id);
  s.gold_spans = std::move(ts.spans);
  return s;
}

void Vocab::save(std::ostream& out) const {
  out << "mccws-vocab " << kFormatVersion << '\n';
  out << "reserved";
  for (int i = 0; i < kReservedCount; ++i) {
    out << ' ' << kReservedNames[i] << '=' << i;
  }
  out << '\n';
  write_section(out, "criteria", criteria_);
  out << "[sources] " << sources_.size() << '\n';
  for (const auto& [name, fp] : sources_) out << name << '\t' << fp << '\n';
  write_section(out, "unigrams", unigrams_);
  write_section(out, "bigrams", bigrams_);
  write_section(out, "lexicon", lexicon_);
}

std::string Vocab::serialize() const {
  std::ostringstream out;
  save(out);
  return out.str();
}

Vocab Vocab::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "mccws-vocab " + std::to_string(kFormatVersion)) {
    throw DataError("vocab: unsupported header '" + line + "'");
  }
  std::getline(in, line);
  {
    std::ostringstream expect;
    expect << "reserved";
    for (int i = 0; i < kReservedCount; ++i) {
      expect << ' ' << kReservedNames[i] << '=' << i;
    }
    if (line != expect.str()) {
      throw DataError("vocab: reserved id declaration mismatch: '" + line + "'");
    }
  }
  Vocab v;
  v.criteria_ = read_section(in, "criteria");
  if (v.criteria_.empty()) throw DataError("vocab: no criteria");
  if (!std::getline(in, line) || line.rfind("[sources] ", 0) != 0) {
    throw DataError("vocab: missing sources section");
  }
  const std::size_t n_sources = std::stoull(line.substr(10));
  for (std::size_t i = 0; i < n_sources; ++i) {
    if (!std::getline(in, line)) throw DataError("vocab: truncated sources");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("vocab: bad source line");
    v.sources_[line.substr(0, tab)] = line.substr(tab + 1);
  }
  v.unigrams_ = read_section(in, "unigrams");
  v.bigrams_ = read_section(in, "bigrams");
  v.lexicon_ = read_section(in, "lexicon");
  for (int i = 0; i < kReservedCount; ++i) {
    if (v.unigrams_.size() <= static_cast<std::size_t>(i) ||
        v.unigrams_[static_cast<std::size_t>(i)] != kReservedNames[i]) {
      throw DataError("vocab: reserved unigram ids not stable");
    }
  }
  for (std::size_t c = 0; c < v.criteria_.size(); ++c) {
    const std::size_t id = kReservedCount + c;
    if (id >= v.unigrams_.size() ||
        v.unigrams_[id] != criterion_token_text(v.criteria_[c])) {
      throw DataError("vocab: criterion token for '" + v.criteria_[c] +
                      "' missing");
    }
  }
  if (v.bigrams_.size() < 2 || v.bigrams_[0] != "<pad>" ||
      v.bigrams_[1] != "<unk>") {
    throw DataError("vocab: reserved bigram ids not stable");
  }
  v.index();
  return v;
}

Vocab Vocab::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocab file " + path);
  return load(in);
}

void Vocab::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file " + path);
  save(out);
}

std::uint64_t Vocab::hash() const { return fnv1a64(serialize()); }

bool Vocab::operator==(const Vocab& other) const {
  return unigrams_ == other.unigrams_ && bigrams_ == other.bigrams_ &&
         criteria_ == other.criteria_ && lexicon_ == other.lexicon_ &&
         sources_ == other.sources_;
}

std::vector<int> augment(const Vocab& vocab, const Sentence& sentence) {
  std::vector<int> out;
  out.reserve(sentence.chars.size() + 1);
  out.push_back(vocab.criterion_token(sentence.criterion_id));
  out.insert(out.end(), sentence.chars.begin(), sentence.chars.end());
  return out;
}

std::vector<int> make_bigrams(const Vocab& vocab, std::span<const int> chars) {
  std::vector<int> out;
  out.reserve(chars.size());
  const std::string* prev = &vocab.unigram(Vocab::kBos);
  for (int id : chars) {
    const std::string& cur = vocab.unigram(id);
    out.push_back(vocab.bigram_id(*prev, cur));
    prev = &cur;
  }
  return out;
}

}  // namespace mccws
