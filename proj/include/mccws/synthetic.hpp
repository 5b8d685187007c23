#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mccws/corpus.hpp"

namespace mccws {

// A two-criterion toy language. Sentences are sequences of units; the coarse
// criterion (criteria[0]) keeps names, prefixed words and digit pairs
// together, the fine criterion (criteria[1]) splits them:
//   name    N G [G]  coarse [NG..]   fine [N][G..]
//   prefix  P W W    coarse [PWW]    fine [P][WW]
//   digits  D..D     coarse [DD][D]  fine [D][D][D]
//   word    W W      both   [WW]
//   single  S        both   [S]
// Character classes are disjoint, so each text has exactly one gold
// segmentation per criterion.
struct SyntheticSpec {
  std::vector<std::string> criteria{"ctb", "pku"};
  std::size_t train_sentences = 2000;
  std::size_t dev_sentences = 200;
  std::size_t test_sentences = 200;
  std::size_t min_units = 3;
  std::size_t max_units = 8;
  std::size_t max_digit_run = 3;

  double weight_single = 0.15;
  double weight_word = 0.25;
  double weight_name = 0.2;
  double weight_digits = 0.2;
  double weight_prefix = 0.2;

  std::vector<std::string> surnames{"李", "王", "张", "刘", "陈", "杨", "赵", "黄"};
  std::vector<std::string> given_names{"娜", "伟", "芳", "敏", "静", "丽",
                                       "强", "磊", "洋", "艳", "勇", "杰"};
  std::vector<std::string> digits{"一", "二", "三", "四", "五", "六", "七", "八", "九"};
  std::vector<std::string> prefixes{"半", "总", "副", "超"};
  std::vector<std::string> words{"进入", "决赛", "比赛", "冠军", "球员", "教练", "城市",
                                 "国家", "经济", "发展", "学生", "老师", "电脑", "音乐",
                                 "电影", "朋友", "天气", "工作", "时间", "问题"};
  std::vector<std::string> singles{"了", "的", "在", "是", "和", "也", "就", "都"};

  // Throws ConfigError for unusable or degenerate (criteria identical) specs.
  void validate() const;
};

struct SyntheticCorpus {
  std::vector<std::string> criteria;
  // Indexed by criterion; split[c][i] and split[c'][i] share their text.
  std::vector<std::vector<RawSentence>> train;
  std::vector<std::vector<RawSentence>> dev;
  std::vector<std::vector<RawSentence>> test;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Word-boundary positions inside the sentence (codepoint offsets, 0 and the
// end excluded).
std::vector<std::size_t> internal_boundaries(const RawSentence& sentence);

// |A xor B| / |A or B| over internal boundaries, pooled across aligned
// sentence pairs. 0 when neither side has any boundary.
double boundary_disagreement(std::span<const RawSentence> a, std::span<const RawSentence> b);

}  // namespace mccws
