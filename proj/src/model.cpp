#include "mccws/model.hpp"

#include <algorithm>
#include <cmath>

#include "mccws/errors.hpp"

namespace mccws {
namespace {

Parameter weight_param(std::string name, std::size_t rows, std::size_t cols,
                       double stddev, Rng& rng) {
  Parameter p{std::move(name), Tensor(rows, cols), true};
  for (Real& v : p.value.data()) v = static_cast<Real>(rng.truncated_normal(stddev));
  return p;
}

Parameter zeros_param(std::string name, std::size_t rows, std::size_t cols) {
  return Parameter{std::move(name), Tensor(rows, cols), false};
}

LinearParams make_linear(const std::string& name, std::size_t out, std::size_t in,
                         double stddev, Rng& rng) {
  return {weight_param(name + ".weight", out, in, stddev, rng),
          zeros_param(name + ".bias", 1, out)};
}

NormParams make_norm(const std::string& name, std::size_t width) {
  return {Parameter{name + ".gain", Tensor(1, width, 1), false},
          zeros_param(name + ".bias", 1, width)};
}

AttentionParams make_attention(const std::string& name, std::size_t d,
                               double stddev, Rng& rng) {
  return {make_linear(name + ".query", d, d, stddev, rng),
          make_linear(name + ".key", d, d, stddev, rng),
          make_linear(name + ".value", d, d, stddev, rng),
          make_linear(name + ".output", d, d, stddev, rng)};
}

template <typename P>
void collect_linear(P& l, auto& out) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
}

template <typename P>
void collect_attention(P& a, auto& out) {
  collect_linear(a.query, out);
  collect_linear(a.key, out);
  collect_linear(a.value, out);
  collect_linear(a.output, out);
}

template <typename M, typename Out>
void collect(M& p, const ModelConfig& c, Out& out) {
  out.push_back(&p.token_embedding);
  if (c.use_positions) out.push_back(&p.position_embedding);
  for (auto& layer : p.layers) {
    collect_attention(layer.attention, out);
    out.push_back(&layer.attention_norm.gain);
    out.push_back(&layer.attention_norm.bias);
    collect_linear(layer.ff_in, out);
    collect_linear(layer.ff_out, out);
    out.push_back(&layer.ff_norm.gain);
    out.push_back(&layer.ff_norm.bias);
  }
  if (c.use_bigram) {
    out.push_back(&p.bigram_embedding);
    collect_linear(p.fusion.hidden, out);
    collect_linear(p.fusion.bigram, out);
    out.push_back(&p.fusion.gate_hidden);
    out.push_back(&p.fusion.gate_bigram);
    out.push_back(&p.fusion.gate_bias);
  }
  collect_attention(p.context_attention, out);
  out.push_back(&p.context_norm.gain);
  out.push_back(&p.context_norm.bias);
  collect_linear(p.label_decoder, out);
  if (c.use_criterion_classifier) collect_linear(p.criterion_classifier, out);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (vocab_size == 0) fail("vocab_size must be >= 1");
  if (use_bigram && bigram_vocab_size == 0) fail("bigram_vocab_size must be >= 1");
  if (num_criteria == 0) fail("num_criteria must be >= 1");
  if (d_h == 0 || d_e == 0 || heads == 0 || d_ff == 0 || max_len == 0) {
    fail("all sizes must be >= 1");
  }
  if (d_h % heads != 0) {
    fail("d_h (" + std::to_string(d_h) + ") not divisible by heads (" +
         std::to_string(heads) + ")");
  }
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must be in [0, 1)");
  if (!(init_std > 0)) fail("init_std must be positive");
  if (!(layer_norm_eps > 0)) fail("layer_norm_eps must be positive");
}

Example Batch::row(std::size_t i) const {
  Example ex;
  const std::size_t len = lengths.at(i);
  const int* tok = tokens.data() + i * (max_length + 1);
  ex.augmented.assign(tok, tok + len + 1);
  ex.bigrams.assign(bigrams.begin() + static_cast<std::ptrdiff_t>(i * max_length),
                    bigrams.begin() + static_cast<std::ptrdiff_t>(i * max_length + len));
  ex.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(i * max_length),
                   labels.begin() + static_cast<std::ptrdiff_t>(i * max_length + len));
  ex.criterion_id = criteria.at(i);
  return ex;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const ModelConfig& c = config_;
  const double s = c.init_std;
  Rng rng(seed);
  params_.token_embedding = weight_param("encoder.token_embedding", c.vocab_size, c.d_h, s, rng);
  params_.position_embedding =
      weight_param("encoder.position_embedding", c.max_len, c.d_h, s, rng);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string prefix = "encoder.layer" + std::to_string(l);
    EncoderLayerParams layer{
        make_attention(prefix + ".attention", c.d_h, s, rng),
        make_norm(prefix + ".attention_norm", c.d_h),
        make_linear(prefix + ".ff_in", c.d_ff, c.d_h, s, rng),
        make_linear(prefix + ".ff_out", c.d_h, c.d_ff, s, rng),
        make_norm(prefix + ".ff_norm", c.d_h)};
    params_.layers.push_back(std::move(layer));
  }
  if (c.use_bigram) {
    params_.bigram_embedding = weight_param("bigram_embedding", c.bigram_vocab_size, c.d_e, s, rng);
    params_.fusion.hidden = make_linear("fusion.hidden", c.d_h, c.d_h, s, rng);
    params_.fusion.bigram = make_linear("fusion.bigram", c.d_h, c.d_e, s, rng);
    params_.fusion.gate_hidden = weight_param("fusion.gate_hidden.weight", c.d_h, c.d_h, s, rng);
    params_.fusion.gate_bigram = weight_param("fusion.gate_bigram.weight", c.d_h, c.d_e, s, rng);
    params_.fusion.gate_bias = zeros_param("fusion.gate.bias", 1, c.d_h);
  }
  params_.context_attention = make_attention("context.attention", c.d_h, s, rng);
  params_.context_norm = make_norm("context.norm", c.d_h);
  params_.label_decoder = make_linear("decoder", kLabelCount, c.d_h, s, rng);
  if (c.use_criterion_classifier) {
    params_.criterion_classifier = make_linear("classifier", c.num_criteria, c.d_h, s, rng);
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  collect(params_, config_, out);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  collect(params_, config_, out);
  return out;
}

Var Model::linear(Tape& tape, const LinearParams& p, Var x) const {
  return tape.linear(x, tape.param(p.weight), tape.param(p.bias));
}

Var Model::norm(Tape& tape, const NormParams& p, Var x) const {
  return tape.layer_norm(x, tape.param(p.gain), tape.param(p.bias),
                         static_cast<Real>(config_.layer_norm_eps));
}

Var Model::attend(Tape& tape, const AttentionParams& p, Var x, std::size_t valid,
                  std::vector<Tensor>* attention) const {
  const std::size_t heads = config_.heads;
  const std::size_t width = config_.d_h / heads;
  const Real scale = 1 / std::sqrt(static_cast<Real>(width));
  Var q = linear(tape, p.query, x);
  Var k = linear(tape, p.key, x);
  Var v = linear(tape, p.value, x);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * width, hi = lo + width;
    Var scores = tape.scale(tape.matmul_nt(tape.slice_cols(q, lo, hi),
                                           tape.slice_cols(k, lo, hi)),
                            scale);
    Var weights = tape.softmax(scores, valid);
    if (attention != nullptr) attention->push_back(tape.value(weights));
    outs.push_back(tape.matmul(weights, tape.slice_cols(v, lo, hi)));
  }
  Var merged = heads == 1 ? outs.front() : tape.concat_cols(outs);
  return linear(tape, p.output, merged);
}

Var Model::encode(Tape& tape, std::span<const int> augmented, bool training, Rng& rng,
                  std::size_t valid) const {
  if (augmented.empty()) throw DataError("encode: empty input");
  if (augmented.size() > config_.max_len) {
    throw DataError("encode: sequence of " + std::to_string(augmented.size()) +
                    " tokens exceeds max_len " + std::to_string(config_.max_len));
  }
  const Real p = static_cast<Real>(config_.dropout);
  Var x = tape.embedding(tape.param(params_.token_embedding), augmented);
  if (config_.use_positions) {
    std::vector<int> positions(augmented.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
    x = tape.add(x, tape.embedding(tape.param(params_.position_embedding), positions));
  }
  x = tape.dropout(x, p, training, rng);
  for (const EncoderLayerParams& layer : params_.layers) {
    Var a = tape.dropout(attend(tape, layer.attention, x, valid, nullptr), p, training, rng);
    x = norm(tape, layer.attention_norm, tape.add(x, a));
    Var f = linear(tape, layer.ff_out, tape.gelu(linear(tape, layer.ff_in, x)));
    f = tape.dropout(f, p, training, rng);
    x = norm(tape, layer.ff_norm, tape.add(x, f));
  }
  return x;
}

Var Model::embed_bigrams(Tape& tape, std::span<const int> bigrams) const {
  if (!config_.use_bigram) throw ConfigError("bigram features are disabled");
  return tape.embedding(tape.param(params_.bigram_embedding), bigrams);
}

Fusion Model::fuse(Tape& tape, Var hidden_rows, Var bigram_rows) const {
  if (!config_.use_bigram) throw ConfigError("bigram features are disabled");
  const Tensor& h = tape.value(hidden_rows);
  const Tensor& e = tape.value(bigram_rows);
  if (h.rows() != e.rows() || h.cols() != config_.d_h || e.cols() != config_.d_e) {
    throw ShapeError("fuse: hidden " + shape_string(h) + " and bigram " +
                     shape_string(e) + " rows do not align");
  }
  const FusionParams& f = params_.fusion;
  Var h_proj = tape.tanh(linear(tape, f.hidden, hidden_rows));
  Var e_proj = tape.tanh(linear(tape, f.bigram, bigram_rows));
  Var gate_pre = tape.add(tape.matmul_nt(hidden_rows, tape.param(f.gate_hidden)),
                          tape.matmul_nt(bigram_rows, tape.param(f.gate_bigram)));
  Var gate = tape.sigmoid(tape.add_row(gate_pre, tape.param(f.gate_bias)));
  Var fused = tape.add(tape.mul(gate, h_proj), tape.mul(tape.one_minus(gate), e_proj));
  return {fused, gate};
}

Var Model::contextualize(Tape& tape, Var fused, bool training, Rng& rng, std::size_t valid,
                         std::vector<Tensor>* attention) const {
  if (tape.value(fused).rows() == 0) throw DataError("contextualize: empty sequence");
  Var a = attend(tape, params_.context_attention, fused, valid, attention);
  a = tape.dropout(a, static_cast<Real>(config_.dropout), training, rng);
  return norm(tape, params_.context_norm, tape.add(a, fused));
}

Var Model::decode_labels(Tape& tape, Var output) const {
  return linear(tape, params_.label_decoder, output);
}

Var Model::classify_criterion(Tape& tape, Var hidden) const {
  if (!config_.use_criterion_classifier) {
    throw ConfigError("criterion classifier is disabled");
  }
  return linear(tape, params_.criterion_classifier, tape.slice_rows(hidden, 0, 1));
}

ForwardGraph Model::build(Tape& tape, const Example& example, bool training, Rng& rng,
                          std::size_t valid) const {
  const std::size_t length = example.bigrams.size();
  if (example.augmented.size() != length + 1) {
    throw ShapeError("example has " + std::to_string(example.augmented.size()) +
                     " augmented ids for " + std::to_string(length) + " bigrams");
  }
  if (length == 0) throw DataError("cannot run the network on an empty sentence");
  const std::size_t valid_chars = std::min(valid, length);
  ForwardGraph g;
  g.hidden = encode(tape, example.augmented, training, rng,
                    valid == kAllRows ? kAllRows : valid_chars + 1);
  Var chars = tape.slice_rows(g.hidden, 1, length + 1);
  if (config_.use_bigram) {
    g.bigram_embedding = embed_bigrams(tape, example.bigrams);
    Fusion fusion = fuse(tape, chars, g.bigram_embedding);
    g.fused = fusion.fused;
    g.gate = fusion.gate;
  } else {
    g.fused = chars;
  }
  Var fused = tape.dropout(g.fused, static_cast<Real>(config_.dropout), training, rng);
  g.output = contextualize(tape, fused, training, rng, valid == kAllRows ? kAllRows : valid_chars);
  g.label_logits = decode_labels(tape, g.output);
  if (config_.use_criterion_classifier) g.criterion_logits = classify_criterion(tape, g.hidden);
  return g;
}

ForwardOutput Model::forward(const Example& example) const {
  Tape tape(false);
  Rng rng(0);
  ForwardGraph g = build(tape, example, false, rng);
  ForwardOutput out;
  out.hidden = tape.value(g.hidden);
  out.fused = tape.value(g.fused);
  out.output = tape.value(g.output);
  out.label_logits = tape.value(g.label_logits);
  if (g.criterion_logits.valid()) out.criterion_logits = tape.value(g.criterion_logits);
  if (g.gate.valid()) {
    const Tensor& gate = tape.value(g.gate);
    for (std::size_t r = 0; r < gate.rows(); ++r) {
      Real total = 0;
      for (Real v : gate.row(r)) total += v;
      out.gate_means.push_back(total / static_cast<Real>(gate.cols()));
    }
  }
  return out;
}

Var Model::sentence_loss(Tape& tape, const Example& example, bool training, Rng& rng) const {
  if (example.labels.size() != example.length()) {
    throw DataError("sentence_loss: example has no gold labels");
  }
  ForwardGraph g = build(tape, example, training, rng);
  Var loss = tape.cross_entropy(g.label_logits, example.labels, {}, Reduction::Sum);
  if (config_.use_criterion_classifier) {
    const int target[] = {example.criterion_id};
    loss = tape.add(loss, tape.cross_entropy(g.criterion_logits, target));
  }
  return loss;
}

Var Model::loss(Tape& tape, const Batch& batch, bool training, Rng& rng) const {
  if (batch.size == 0) throw std::invalid_argument("loss: empty batch");
  Var total;
  for (std::size_t i = 0; i < batch.size; ++i) {
    Var l = sentence_loss(tape, batch.row(i), training, rng);
    total = total.valid() ? tape.add(total, l) : l;
  }
  return tape.scale(total, Real(1) / static_cast<Real>(batch.size));
}

LabelSeq argmax_labels(const Tensor& label_logits) {
  LabelSeq out(label_logits.rows());
  for (std::size_t r = 0; r < label_logits.rows(); ++r) {
    auto row = label_logits.row(r);
    out[r] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

LabelSeq Model::predict_labels(const Example& example) const {
  if (example.length() == 0) return {};
  return argmax_labels(forward(example).label_logits);
}

int Model::predict_criterion(const Example& example) const {
  const Tensor logits = forward(example).criterion_logits;
  if (logits.size() == 0) return -1;
  auto d = logits.data();
  return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace mccws
