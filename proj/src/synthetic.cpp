#include "mccws/synthetic.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "mccws/errors.hpp"
#include "mccws/random.hpp"
#include "mccws/utf8.hpp"

namespace mccws {
namespace {

enum class Unit { Single, Word, Name, Digits, Prefix };

struct Segmented {
  std::vector<std::string> coarse;
  std::vector<std::string> fine;
};

const std::string& pick(const std::vector<std::string>& items, Rng& rng) {
  return items[rng.below(items.size())];
}

Unit draw_unit(const SyntheticSpec& s, Rng& rng) {
  const double weights[] = {s.weight_single, s.weight_word, s.weight_name, s.weight_digits,
                            s.weight_prefix};
  double total = 0;
  for (double w : weights) total += w;
  double x = rng.uniform() * total;
  for (int i = 0; i < 5; ++i) {
    if (x < weights[i] || i == 4) return static_cast<Unit>(i);
    x -= weights[i];
  }
  return Unit::Prefix;
}

void emit(const SyntheticSpec& s, Unit unit, Rng& rng, Segmented& out) {
  switch (unit) {
    case Unit::Single: {
      const std::string& w = pick(s.singles, rng);
      out.coarse.push_back(w);
      out.fine.push_back(w);
      break;
    }
    case Unit::Word: {
      const std::string& w = pick(s.words, rng);
      out.coarse.push_back(w);
      out.fine.push_back(w);
      break;
    }
    case Unit::Name: {
      const std::string& surname = pick(s.surnames, rng);
      std::string given = pick(s.given_names, rng);
      if (rng.bernoulli(0.5)) given += pick(s.given_names, rng);
      out.coarse.push_back(surname + given);
      out.fine.push_back(surname);
      out.fine.push_back(given);
      break;
    }
    case Unit::Digits: {
      const std::size_t run = 1 + rng.below(s.max_digit_run);
      std::vector<std::string> ds;
      for (std::size_t i = 0; i < run; ++i) ds.push_back(pick(s.digits, rng));
      for (std::size_t i = 0; i < run; i += 2) {
        out.coarse.push_back(i + 1 < run ? ds[i] + ds[i + 1] : ds[i]);
      }
      out.fine.insert(out.fine.end(), ds.begin(), ds.end());
      break;
    }
    case Unit::Prefix: {
      const std::string& p = pick(s.prefixes, rng);
      const std::string& w = pick(s.words, rng);
      out.coarse.push_back(p + w);
      out.fine.push_back(p);
      out.fine.push_back(w);
      break;
    }
  }
}

Segmented make_sentence(const SyntheticSpec& s, Rng& rng) {
  const std::size_t units = s.min_units + rng.below(s.max_units - s.min_units + 1);
  Segmented out;
  bool last_digits = false;
  for (std::size_t i = 0; i < units; ++i) {
    Unit u = draw_unit(s, rng);
    // Adjacent digit units would merge into one run.
    while (last_digits && u == Unit::Digits) u = draw_unit(s, rng);
    last_digits = u == Unit::Digits;
    emit(s, u, rng, out);
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synthetic spec: " + msg); };
  if (criteria.size() != 2) fail("exactly two criteria are required");
  if (criteria[0] == criteria[1]) fail("criteria names must differ");
  if (min_units == 0 || max_units < min_units) fail("need 1 <= min_units <= max_units");
  if (max_digit_run == 0) fail("max_digit_run must be >= 1");
  const double weights[] = {weight_single, weight_word, weight_name, weight_digits, weight_prefix};
  double total = 0;
  for (double w : weights) {
    if (w < 0) fail("negative unit weight");
    total += w;
  }
  if (total <= 0) fail("all unit weights are zero");
  const double disagreeing =
      weight_name + weight_prefix + (max_digit_run >= 2 ? weight_digits : 0.0);
  if (disagreeing <= 0) fail("degenerate: both criteria would segment identically");
  auto need = [&](double w, const std::vector<std::string>& inv, const char* what) {
    if (w > 0 && inv.empty()) fail(std::string("empty inventory: ") + what);
  };
  need(weight_single, singles, "singles");
  need(weight_word + weight_prefix, words, "words");
  need(weight_name, surnames, "surnames");
  need(weight_name, given_names, "given_names");
  need(weight_digits, digits, "digits");
  need(weight_prefix, prefixes, "prefixes");

  std::set<char32_t> seen;
  auto claim = [&](const std::vector<std::string>& inv, std::size_t length, const char* what) {
    std::set<char32_t> local;
    for (const std::string& item : inv) {
      const std::u32string cps = utf8::decode(item);
      if (cps.size() != length) fail(std::string(what) + " entries must have length " +
                                     std::to_string(length));
      local.insert(cps.begin(), cps.end());
    }
    for (char32_t cp : local) {
      if (!seen.insert(cp).second) fail(std::string("character classes overlap in ") + what);
    }
  };
  claim(surnames, 1, "surnames");
  claim(given_names, 1, "given_names");
  claim(digits, 1, "digits");
  claim(prefixes, 1, "prefixes");
  claim(singles, 1, "singles");
  // First and second characters of words must be distinguishable.
  std::vector<std::string> firsts, seconds;
  for (const std::string& w : words) {
    const std::u32string cps = utf8::decode(w);
    if (cps.size() != 2) fail("words entries must have length 2");
    firsts.push_back(utf8::encode(cps.substr(0, 1)));
    seconds.push_back(utf8::encode(cps.substr(1, 1)));
  }
  std::sort(firsts.begin(), firsts.end());
  firsts.erase(std::unique(firsts.begin(), firsts.end()), firsts.end());
  std::sort(seconds.begin(), seconds.end());
  seconds.erase(std::unique(seconds.begin(), seconds.end()), seconds.end());
  claim(firsts, 1, "word-initial characters");
  claim(seconds, 1, "word-final characters");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticCorpus corpus;
  corpus.criteria = spec.criteria;
  auto fill = [&](std::size_t count, std::vector<std::vector<RawSentence>>& split) {
    split.assign(2, {});
    for (std::size_t i = 0; i < count; ++i) {
      Segmented s = make_sentence(spec, rng);
      split[0].push_back({std::move(s.coarse), 0});
      split[1].push_back({std::move(s.fine), 1});
    }
  };
  fill(spec.train_sentences, corpus.train);
  fill(spec.dev_sentences, corpus.dev);
  fill(spec.test_sentences, corpus.test);
  return corpus;
}

std::vector<std::size_t> internal_boundaries(const RawSentence& sentence) {
  std::vector<std::size_t> out;
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < sentence.words.size(); ++i) {
    offset += utf8::decode(sentence.words[i]).size();
    out.push_back(offset);
  }
  return out;
}

double boundary_disagreement(std::span<const RawSentence> a, std::span<const RawSentence> b) {
  if (a.size() != b.size()) throw std::invalid_argument("boundary_disagreement: size mismatch");
  std::size_t differ = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ba = internal_boundaries(a[i]);
    const auto bb = internal_boundaries(b[i]);
    std::vector<std::size_t> uni, sym;
    std::set_union(ba.begin(), ba.end(), bb.begin(), bb.end(), std::back_inserter(uni));
    std::set_symmetric_difference(ba.begin(), ba.end(), bb.begin(), bb.end(),
                                  std::back_inserter(sym));
    differ += sym.size();
    total += uni.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(differ) / static_cast<double>(total);
}

}  // namespace mccws
