#include "mccws/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace mccws {
namespace {

void require_same_count(std::size_t gold, std::size_t pred) {
  if (gold != pred) {
    throw std::invalid_argument("gold has " + std::to_string(gold) +
                                " sentences but prediction has " + std::to_string(pred));
  }
}

// Both lists are sorted partitions, so a merge walk finds exact matches.
template <typename F>
void for_each_match(const SpanList& gold, const SpanList& pred, F&& on_match) {
  std::size_t i = 0, j = 0;
  while (i < gold.size() && j < pred.size()) {
    if (gold[i] == pred[j]) {
      on_match(i);
      ++i;
      ++j;
    } else if (gold[i] < pred[j]) {
      ++i;
    } else {
      ++j;
    }
  }
}

}  // namespace

PrfCounts finish_prf(std::size_t tp, std::size_t pred_count, std::size_t gold_count) {
  PrfCounts out{tp, pred_count, gold_count};
  out.precision = pred_count == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred_count);
  out.recall = gold_count == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold_count);
  // 2PR/(P+R) reduced to counts, so exact ratios such as 4/7 stay exact.
  out.f1 = tp == 0 ? 0.0
                   : 2.0 * static_cast<double>(tp) / static_cast<double>(pred_count + gold_count);
  return out;
}

PrfCounts f1_score(std::span<const SpanList> gold, std::span<const SpanList> pred) {
  require_same_count(gold.size(), pred.size());
  std::size_t tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    n_gold += gold[s].size();
    n_pred += pred[s].size();
    for_each_match(gold[s], pred[s], [&](std::size_t) { ++tp; });
  }
  return finish_prf(tp, n_pred, n_gold);
}

OovCounts oov_recall(std::span<const SpanList> gold, std::span<const SpanList> pred,
                     std::span<const std::vector<std::string>> gold_keys,
                     const Lexicon& lexicon) {
  require_same_count(gold.size(), pred.size());
  require_same_count(gold.size(), gold_keys.size());
  OovCounts out;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold_keys[s].size() != gold[s].size()) {
      throw std::invalid_argument("gold keys misaligned with gold spans in sentence " +
                                  std::to_string(s));
    }
    std::vector<char> matched(gold[s].size(), 0);
    for_each_match(gold[s], pred[s], [&](std::size_t i) { matched[i] = 1; });
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      if (lexicon.contains(gold_keys[s][i])) continue;
      ++out.oov_total;
      if (matched[i]) ++out.oov_correct;
    }
  }
  out.vacuous = out.oov_total == 0;
  out.oov_recall = out.vacuous ? 0.0
                               : static_cast<double>(out.oov_correct) /
                                     static_cast<double>(out.oov_total);
  return out;
}

EvalReport make_report(std::string criterion, const PrfCounts& prf, const OovCounts& oov) {
  return EvalReport{std::move(criterion), prf.true_positives, prf.pred_count, prf.gold_count,
                    prf.precision, prf.recall, prf.f1, oov.oov_total, oov.oov_correct,
                    oov.oov_recall};
}

EvalReport mean_report(std::span<const EvalReport> reports, std::string label) {
  EvalReport out;
  out.criterion = std::move(label);
  if (reports.empty()) return out;
  for (const EvalReport& r : reports) {
    out.true_positives += r.true_positives;
    out.pred_count += r.pred_count;
    out.gold_count += r.gold_count;
    out.oov_total += r.oov_total;
    out.oov_correct += r.oov_correct;
    out.precision += r.precision;
    out.recall += r.recall;
    out.f1 += r.f1;
    out.oov_recall += r.oov_recall;
  }
  const double n = static_cast<double>(reports.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  out.oov_recall /= n;
  return out;
}

void write_report_table(std::ostream& out, std::span<const EvalReport> reports) {
  std::size_t name_width = 9;
  for (const auto& r : reports) name_width = std::max(name_width, r.criterion.size());
  const auto flags = out.flags();
  out << std::left << std::setw(static_cast<int>(name_width)) << "criterion" << std::right
      << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1"
      << std::setw(12) << "oov_recall" << std::setw(11) << "oov_total" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(name_width)) << r.criterion << std::right
        << std::setw(11) << r.precision << std::setw(9) << r.recall << std::setw(9) << r.f1
        << std::setw(12) << r.oov_recall << std::setw(11) << r.oov_total << '\n';
  }
  out.flags(flags);
}

void write_report_records(std::ostream& out, std::span<const EvalReport> reports) {
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["criterion"] = r.criterion;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["oov_recall"] = r.oov_recall;
    j["oov_total"] = r.oov_total;
    out << j.dump() << '\n';
  }
}

}  // namespace mccws
