#include "mccws/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "mccws/checkpoint.hpp"
#include "mccws/errors.hpp"
#include "mccws/hash.hpp"
#include "mccws/segmenter.hpp"
#include "mccws/utf8.hpp"
#include "mccws/vocab.hpp"

namespace mccws::cli {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Criterion ids follow first appearance on the command line.
std::vector<std::string> criteria_of(const std::vector<CorpusArg>& corpora) {
  std::vector<std::string> names;
  for (const CorpusArg& c : corpora) {
    if (std::find(names.begin(), names.end(), c.criterion) == names.end()) {
      names.push_back(c.criterion);
    }
  }
  return names;
}

std::vector<Sentence> load_sentences(const Vocab& vocab, const std::vector<CorpusArg>& corpora,
                                     std::size_t max_tokens) {
  std::vector<Sentence> out;
  for (const CorpusArg& c : corpora) {
    const int id = vocab.criterion_id(c.criterion);
    for (const RawSentence& raw : load_corpus(c.path, id)) {
      for (const RawSentence& piece : split_overlong(raw, max_tokens)) {
        out.push_back(vocab.make_sentence(piece));
      }
    }
  }
  return out;
}

LoadedCheckpoint load_matching_checkpoint(const std::string& path, const Vocab& vocab) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.vocab_hash != vocab.hash()) {
    throw ConfigError("checkpoint " + path + " was trained with a different vocab (hash " +
                      to_hex(ck.vocab_hash) + ", vocab " + to_hex(vocab.hash()) + ")");
  }
  return ck;
}

Vocab load_vocab(const RunConfig& config) {
  if (config.vocab_path.empty()) throw ConfigError("--vocab is required");
  return Vocab::load_file(config.vocab_path);
}

void write_lines(const std::string& path, const std::vector<RawSentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const RawSentence& s : sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) out << (i ? " " : "") << s.words[i];
    out << '\n';
  }
}

}  // namespace

CorpusArg parse_corpus_arg(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("expected name=path, got '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

void RunConfig::validate() const {
  for (const auto* list : {&corpora, &dev}) {
    std::set<std::string> seen;
    for (const CorpusArg& c : *list) {
      if (!seen.insert(c.criterion).second) {
        throw ConfigError("criterion '" + c.criterion + "' given twice");
      }
      if (!std::filesystem::exists(c.path)) {
        throw ConfigError("corpus file not found: " + c.path);
      }
    }
  }
  for (const std::string* p : {&vocab_path, &checkpoint}) {
    if (!p->empty() && subcommand != "build-vocab" && subcommand != "train" &&
        !std::filesystem::exists(*p)) {
      throw ConfigError("file not found: " + *p);
    }
  }
  if (subcommand == "train" && !vocab_path.empty() && !std::filesystem::exists(vocab_path)) {
    throw ConfigError("file not found: " + vocab_path);
  }
}

std::string file_fingerprint(const std::string& path) {
  return to_hex(fnv1a64(read_file(path)));
}

int cmd_build_vocab(const RunConfig& config, std::ostream& out, std::ostream&) {
  if (config.corpora.empty()) throw ConfigError("build-vocab needs at least one --corpus");
  if (config.vocab_path.empty()) throw ConfigError("--vocab output path is required");
  const std::vector<std::string> names = criteria_of(config.corpora);
  std::vector<RawSentence> train;
  for (const CorpusArg& c : config.corpora) {
    const int id = static_cast<int>(std::find(names.begin(), names.end(), c.criterion) - names.begin());
    auto sentences = load_corpus(c.path, id);
    train.insert(train.end(), std::make_move_iterator(sentences.begin()),
                 std::make_move_iterator(sentences.end()));
  }
  Vocab vocab = Vocab::build(names, train);
  for (const CorpusArg& c : config.corpora) vocab.set_source(c.criterion, file_fingerprint(c.path));
  vocab.save_file(config.vocab_path);
  out << "criteria " << vocab.criterion_count() << "\nunigrams " << vocab.unigram_size()
      << "\nbigrams " << vocab.bigram_size() << "\nlexicon " << vocab.lexicon_size() << '\n';
  return kOk;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  if (config.corpora.empty()) throw ConfigError("train needs at least one --corpus");
  if (config.checkpoint.empty()) throw ConfigError("--checkpoint output path is required");
  const Vocab vocab = load_vocab(config);
  for (const CorpusArg& c : config.corpora) {
    vocab.criterion_id(c.criterion);
    const auto it = vocab.sources().find(c.criterion);
    if (it == vocab.sources().end() || it->second != file_fingerprint(c.path)) {
      throw ConfigError("corpus " + c.path + " does not match the corpus the vocab was built from"
                        " for criterion '" + c.criterion + "'");
    }
  }
  ModelConfig mc = config.model;
  mc.vocab_size = vocab.unigram_size();
  mc.bigram_vocab_size = vocab.bigram_size();
  mc.num_criteria = vocab.criterion_count();
  const Model initial(mc, config.seed);

  const std::vector<Sentence> train_set = load_sentences(vocab, config.corpora, mc.max_len - 1);
  const std::vector<Sentence> dev_set = load_sentences(vocab, config.dev, mc.max_len - 1);
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  if (tc.epochs == 0) err << "warning: --epochs 0, writing the initialized parameters\n";

  const std::string log_path =
      config.log_path.empty() ? config.checkpoint + ".metrics.jsonl" : config.log_path;
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw DataError("cannot write metrics log " + log_path);
  const TrainResult result = train(initial, vocab, train_set, dev_set, tc, [&](const MetricRecord& r) {
    log << to_json_line(r) << '\n';
    log.flush();
    out << "epoch " << r.epoch << ' ' << r.split << ' ' << r.criterion << " loss " << r.loss;
    if (r.split == "dev") out << " f1 " << r.f1 << " oov_recall " << r.oov_recall;
    out << '\n';
  });
  save_checkpoint(config.checkpoint, result.model, vocab.hash(),
                  tc.epochs == 0 ? nullptr : &result.optimizer);
  out << "wrote " << config.checkpoint << " (best epoch " << result.best_epoch << ")\n";
  return kOk;
}

int cmd_segment(const RunConfig& config, std::istream& in, std::ostream& out, std::ostream&) {
  if (config.criterion.empty()) throw ConfigError("--criterion is required");
  const Vocab vocab = load_vocab(config);
  const LoadedCheckpoint ck = load_matching_checkpoint(config.checkpoint, vocab);
  const Segmenter segmenter(ck.model, vocab);
  vocab.criterion_id(config.criterion);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (const auto bad = utf8::find_invalid(line)) {
      throw DataError("input line " + std::to_string(line_no) + ": invalid UTF-8 at byte " +
                      std::to_string(*bad));
    }
    const std::vector<std::string> words = segmenter.segment(line, config.criterion);
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    out << '\n';
    out.flush();
  }
  return kOk;
}

int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream&) {
  if (config.corpora.empty()) throw ConfigError("evaluate needs at least one --corpus gold file");
  const Vocab vocab = load_vocab(config);
  std::optional<LoadedCheckpoint> ck;
  if (!config.passthrough) ck = load_matching_checkpoint(config.checkpoint, vocab);
  const std::size_t max_len = ck ? ck->model.config().max_len : config.model.max_len;

  struct GoldSet {
    std::string criterion;
    std::vector<RawSentence> sentences;
  };
  std::vector<GoldSet> golds;
  std::vector<std::string> overlong;
  for (const CorpusArg& c : config.corpora) {
    GoldSet g{c.criterion, load_corpus(c.path, vocab.criterion_id(c.criterion))};
    for (std::size_t i = 0; i < g.sentences.size(); ++i) {
      std::string text;
      for (const auto& w : g.sentences[i].words) text += w;
      if (tokenize(text).size() + 1 > max_len) {
        overlong.push_back(c.path + " sentence " + std::to_string(i + 1));
      }
    }
    golds.push_back(std::move(g));
  }
  if (!overlong.empty()) {
    std::string msg = "sentences exceed max_len " + std::to_string(max_len) + ":";
    for (const auto& o : overlong) msg += "\n  " + o;
    throw DataError(msg);
  }

  const VocabLexicon lexicon(vocab);
  std::vector<EvalReport> reports;
  for (const GoldSet& g : golds) {
    std::vector<SpanList> gold, pred;
    std::vector<std::vector<std::string>> keys;
    for (const RawSentence& s : g.sentences) {
      SpanList spans;
      std::vector<std::string> ks;
      std::string text;
      std::size_t offset = 0;
      for (const auto& w : s.words) {
        const std::size_t len = utf8::decode(w).size();
        spans.push_back({offset, offset + len});
        offset += len;
        ks.push_back(word_key(w));
        text += w;
      }
      if (ck) {
        pred.push_back(Segmenter(ck->model, vocab).segment_spans(text, s.criterion_id));
      } else {
        pred.push_back(spans);
      }
      gold.push_back(std::move(spans));
      keys.push_back(std::move(ks));
    }
    reports.push_back(make_report(g.criterion, f1_score(gold, pred),
                                  oov_recall(gold, pred, keys, lexicon)));
  }
  std::vector<EvalReport> rows = reports;
  if (reports.size() > 1) rows.push_back(mean_report(reports));
  write_report_table(out, rows);
  if (!config.output.empty()) {
    std::ofstream records(config.output, std::ios::binary);
    if (!records) throw DataError("cannot write " + config.output);
    write_report_records(records, rows);
  }
  return kOk;
}

int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream&) {
  if (config.out_dir.empty()) throw ConfigError("--out-dir is required");
  const SyntheticCorpus corpus = generate_synthetic(config.synth, config.seed);
  std::filesystem::create_directories(config.out_dir);
  for (std::size_t c = 0; c < corpus.criteria.size(); ++c) {
    const std::string base = config.out_dir + "/" + corpus.criteria[c];
    write_lines(base + ".train.txt", corpus.train[c]);
    write_lines(base + ".dev.txt", corpus.dev[c]);
    write_lines(base + ".test.txt", corpus.test[c]);
  }
  out << "boundary disagreement (train) "
      << boundary_disagreement(corpus.train[0], corpus.train[1]) << '\n';
  return kOk;
}

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err) {
  RunConfig config;
  std::vector<std::string> corpus_args, dev_args;

  CLI::App app{"Multi-criteria Chinese word segmentation"};
  app.set_config("--config", "", "INI/TOML file with default flag values");
  app.require_subcommand(1);

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--d-h", config.model.d_h, "Hidden size")->capture_default_str();
    cmd->add_option("--d-e", config.model.d_e, "Bigram embedding size")->capture_default_str();
    cmd->add_option("--layers", config.model.encoder_layers, "Encoder layers")->capture_default_str();
    cmd->add_option("--heads", config.model.heads, "Attention heads")->capture_default_str();
    cmd->add_option("--d-ff", config.model.d_ff, "Feed-forward inner size")->capture_default_str();
    cmd->add_option("--max-len", config.model.max_len, "Max augmented length")->capture_default_str();
    cmd->add_option("--dropout", config.model.dropout, "Dropout probability")->capture_default_str();
    cmd->add_flag("--no-bigram{false}", config.model.use_bigram, "Disable bigram features");
    cmd->add_flag("--no-criterion-classifier{false}", config.model.use_criterion_classifier,
                  "Disable the auxiliary criterion classifier");
  };

  auto* build = app.add_subcommand("build-vocab", "Build vocab tables from training corpora");
  build->add_option("--corpus", corpus_args, "Training corpus as name=path")->required();
  build->add_option("--vocab", config.vocab_path, "Output vocab file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--corpus", corpus_args, "Training corpus as name=path")->required();
  train_cmd->add_option("--dev", dev_args, "Dev corpus as name=path");
  train_cmd->add_option("--vocab", config.vocab_path, "Vocab file")->required();
  train_cmd->add_option("--checkpoint", config.checkpoint, "Output checkpoint")->required();
  train_cmd->add_option("--log", config.log_path, "Metrics log (JSON lines)");
  train_cmd->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--epochs", config.train.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", config.train.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", config.train.lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--warmup-ratio", config.train.warmup_ratio, "Warmup ratio")->capture_default_str();
  train_cmd->add_option("--weight-decay", config.train.adamw.weight_decay, "AdamW weight decay")
      ->capture_default_str();
  train_cmd->add_option("--eval-every", config.train.eval_every, "Dev evaluation interval (epochs)")
      ->capture_default_str();
  add_model_flags(train_cmd);

  auto* segment = app.add_subcommand("segment", "Segment raw text, one sentence per line");
  segment->add_option("--vocab", config.vocab_path, "Vocab file")->required();
  segment->add_option("--checkpoint", config.checkpoint, "Checkpoint")->required();
  segment->add_option("--criterion", config.criterion, "Segmentation criterion")->required();
  segment->add_option("--input", config.input, "Input file, - for stdin")->capture_default_str();
  segment->add_option("--output", config.output, "Output file (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a model on gold-segmented files");
  evaluate->add_option("--corpus", corpus_args, "Gold corpus as name=path")->required();
  evaluate->add_option("--vocab", config.vocab_path, "Vocab file")->required();
  evaluate->add_option("--checkpoint", config.checkpoint, "Checkpoint");
  evaluate->add_option("--output", config.output, "Write JSON-lines records here");
  evaluate->add_flag("--passthrough", config.passthrough,
                     "Score the gold segmentation against itself (no model)");

  auto* synth = app.add_subcommand("synth", "Write the synthetic two-criterion corpus");
  synth->add_option("--out-dir", config.out_dir, "Output directory")->required();
  synth->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  synth->add_option("--train-size", config.synth.train_sentences, "Training sentences")
      ->capture_default_str();
  synth->add_option("--dev-size", config.synth.dev_sentences, "Dev sentences")->capture_default_str();
  synth->add_option("--test-size", config.synth.test_sentences, "Test sentences")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    for (const auto& a : corpus_args) config.corpora.push_back(parse_corpus_arg(a));
    for (const auto& a : dev_args) config.dev.push_back(parse_corpus_arg(a));
    config.subcommand = app.get_subcommands().front()->get_name();
    config.validate();
    if (config.subcommand == "build-vocab") return cmd_build_vocab(config, out, err);
    if (config.subcommand == "train") return cmd_train(config, out, err);
    if (config.subcommand == "evaluate") return cmd_evaluate(config, out, err);
    if (config.subcommand == "synth") return cmd_synth(config, out, err);
    std::ifstream file_in;
    std::istream* source = &in;
    if (config.input != "-") {
      file_in.open(config.input, std::ios::binary);
      if (!file_in) throw DataError("cannot read " + config.input);
      source = &file_in;
    }
    if (config.output.empty()) return cmd_segment(config, *source, out, err);
    std::ofstream file_out(config.output, std::ios::binary);
    if (!file_out) throw DataError("cannot write " + config.output);
    return cmd_segment(config, *source, file_out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace mccws::cli
