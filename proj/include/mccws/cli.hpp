#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mccws/model.hpp"
#include "mccws/synthetic.hpp"
#include "mccws/trainer.hpp"

namespace mccws::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,
  kConfigError = 2,
  kDataError = 3,
  kDivergence = 4,
};

struct CorpusArg {
  std::string criterion;
  std::string path;
};

// Parses "name=path"; throws ConfigError.
CorpusArg parse_corpus_arg(const std::string& text);

struct RunConfig {
  std::string subcommand;
  std::vector<CorpusArg> corpora;
  std::vector<CorpusArg> dev;
  std::string vocab_path;
  std::string checkpoint;
  std::string criterion;
  std::string input = "-";
  std::string output;
  std::string log_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  bool passthrough = false;

  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synth;

  // Criterion names unique, referenced files present. Throws ConfigError.
  void validate() const;
};

// Each command reads its files, writes results, and reports to `out`/`err`.
// Failures are thrown (ConfigError, DataError, DivergenceError) and mapped to
// exit codes by run().
int cmd_build_vocab(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_segment(const RunConfig& config, std::istream& in, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err);

// Fingerprint of a corpus file as recorded in the vocab.
std::string file_fingerprint(const std::string& path);

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace mccws::cli
