#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mccws/checkpoint.hpp"
#include "mccws/errors.hpp"
#include "mccws/model.hpp"
#include "mccws/segmenter.hpp"
#include "mccws/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/toy.hpp"

using namespace mccws;
using testing::toy_config;
using testing::toy_example;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(2 * rng.uniform() - 1);
  return out;
}

double dot_row(const Tensor& w, std::size_t out_row, std::span<const Real> x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w(out_row, i) * x[i];
  return acc;
}

void zero(Parameter& p) { p.value.fill(0); }

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = toy_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.d_e = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("parameter names are unique and shapes follow the config") {
  Model m(toy_config(3), 1);
  std::set<std::string> names;
  for (const Parameter* p : std::as_const(m).parameters()) CHECK(names.insert(p->name).second);
  CHECK(m.params().label_decoder.weight.value.shape() == std::vector<std::size_t>{4, 8});
  CHECK(m.params().criterion_classifier.weight.value.shape() == std::vector<std::size_t>{3, 8});
  CHECK(m.params().bigram_embedding.value.shape() == std::vector<std::size_t>{15, 4});
  CHECK(m.params().fusion.gate_bigram.value.shape() == std::vector<std::size_t>{8, 4});
  CHECK_FALSE(m.params().fusion.gate_bias.decay);
  CHECK_FALSE(m.params().context_norm.gain.decay);
  CHECK(m.params().fusion.gate_hidden.decay);
}

TEST_CASE("forward shapes for T = 7") {
  const ModelConfig c = toy_config();
  Model m(c, 2);
  Rng rng(3);
  const Example ex = toy_example(c, 7, rng);
  const ForwardOutput out = m.forward(ex);
  CHECK(out.hidden.shape() == std::vector<std::size_t>{8, 8});
  CHECK(out.fused.shape() == std::vector<std::size_t>{7, 8});
  CHECK(out.output.shape() == std::vector<std::size_t>{7, 8});
  CHECK(out.label_logits.shape() == std::vector<std::size_t>{7, 4});
  CHECK(out.criterion_logits.shape() == std::vector<std::size_t>{1, 2});
  CHECK(out.gate_means.size() == 7);
}

TEST_CASE("encode rejects overlong input") {
  ModelConfig c = toy_config();
  Model m(c, 2);
  Rng rng(3);
  const Example ex = toy_example(c, c.max_len, rng);
  CHECK_THROWS_AS(m.forward(ex), DataError);
}

TEST_CASE("the criterion token changes H; eval mode is deterministic") {
  const ModelConfig c = toy_config();
  Model m(c, 4);
  Rng rng(5);
  Example a = toy_example(c, 5, rng);
  Example b = a;
  b.augmented[0] = a.augmented[0] == 5 ? 6 : 5;
  const ForwardOutput oa = m.forward(a), ob = m.forward(b);
  CHECK(oa.hidden.shape() == ob.hidden.shape());
  CHECK(max_abs_diff(oa.hidden, ob.hidden) > 0);
  CHECK(m.forward(a).hidden == oa.hidden);
  CHECK(m.forward(a).label_logits == oa.label_logits);
}

TEST_CASE("fusion gate saturation") {
  const ModelConfig c = toy_config();
  Model m(c, 6);
  Rng rng(7);
  const Tensor h = random_tensor(3, c.d_h, rng);
  const Tensor e = random_tensor(3, c.d_e, rng);
  auto run = [&](Real bias) {
    m.params().fusion.gate_bias.value.fill(bias);
    Tape t(false);
    const Var hv = t.constant(h), ev = t.constant(e);
    const Fusion f = m.fuse(t, hv, ev);
    const Var hp = t.tanh(t.linear(hv, t.param(m.params().fusion.hidden.weight),
                                   t.param(m.params().fusion.hidden.bias)));
    const Var ep = t.tanh(t.linear(ev, t.param(m.params().fusion.bigram.weight),
                                   t.param(m.params().fusion.bigram.bias)));
    return std::tuple{t.value(f.fused), t.value(hp), t.value(ep)};
  };
  {
    const auto [f, hp, ep] = run(60);
    CHECK(max_abs_diff(f, hp) <= 1e-6);
  }
  {
    const auto [f, hp, ep] = run(-60);
    CHECK(max_abs_diff(f, ep) <= 1e-6);
  }
}

TEST_CASE("fusion matches a straight-line evaluation (d_h=3, d_e=2)") {
  ModelConfig c = toy_config();
  c.d_h = 3;
  c.d_e = 2;
  c.heads = 1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model m(c, seed);
    Rng rng(seed + 50);
    testing::widen_init(m, rng, 1.0);
    const Tensor h = random_tensor(2, 3, rng);
    const Tensor e = random_tensor(2, 2, rng);
    Tape t(false);
    const Fusion f = m.fuse(t, t.constant(h), t.constant(e));
    const Tensor fused = t.value(f.fused);
    const Tensor gate = t.value(f.gate);
    const FusionParams& p = m.params().fusion;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double hp = std::tanh(dot_row(p.hidden.weight.value, k, h.row(r)) + p.hidden.bias.value[k]);
        const double ep = std::tanh(dot_row(p.bigram.weight.value, k, e.row(r)) + p.bigram.bias.value[k]);
        const double g = 1 / (1 + std::exp(-(dot_row(p.gate_hidden.value, k, h.row(r)) +
                                             dot_row(p.gate_bigram.value, k, e.row(r)) +
                                             p.gate_bias.value[k])));
        CHECK(std::abs(gate(r, k) - g) <= 1e-12);
        CHECK(std::abs(fused(r, k) - (g * hp + (1 - g) * ep)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("fuse rejects misaligned inputs") {
  const ModelConfig c = toy_config();
  Model m(c, 1);
  Tape t(false);
  CHECK_THROWS_AS(m.fuse(t, t.constant(Tensor(3, c.d_h)), t.constant(Tensor(2, c.d_e))), ShapeError);
}

TEST_CASE("gates lie in (0,1) and fused values in (-1,1)") {
  const ModelConfig c = toy_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model m(c, seed);
    Rng rng(seed);
    testing::widen_init(m, rng, 1.0);
    const Example ex = toy_example(c, 6, rng);
    Tape t(false);
    Rng drop(0);
    const ForwardGraph g = m.build(t, ex, false, drop);
    const Tensor gate = t.value(g.gate);
    const Tensor fused = t.value(g.fused);
    for (std::size_t i = 0; i < gate.size(); ++i) {
      CHECK((gate[i] > 0 && gate[i] < 1));
      CHECK((fused[i] > -1 && fused[i] < 1));
    }
  }
}

TEST_CASE("contextualize: T = 1 and attention rows") {
  const ModelConfig c = toy_config();
  Model m(c, 9);
  Rng rng(10);
  Rng drop(0);
  {
    Tape t(false);
    const Tensor f = random_tensor(1, c.d_h, rng);
    std::vector<Tensor> attention;
    const Var o = m.contextualize(t, t.constant(f), false, drop, kAllRows, &attention);
    CHECK(t.value(o).shape() == std::vector<std::size_t>{1, c.d_h});
    for (const Tensor& a : attention) CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    Tape t(false);
    std::vector<Tensor> attention;
    m.contextualize(t, t.constant(random_tensor(5, c.d_h, rng)), false, drop, 3, &attention);
    CHECK(attention.size() == c.heads);
    for (const Tensor& a : attention) {
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double total = 0;
        for (std::size_t k = 0; k < a.cols(); ++k) total += a(r, k);
        CHECK(std::abs(total - 1.0) <= 1e-10);
        CHECK(a(r, 3) == 0);
        CHECK(a(r, 4) == 0);
      }
    }
  }
}

TEST_CASE("contextualize and the encoder are permutation equivariant without positions") {
  ModelConfig c = toy_config();
  c.use_positions = false;
  Model m(c, 11);
  Rng rng(12);
  testing::widen_init(m, rng, 0.3);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Rng drop(0);

  const Tensor f = random_tensor(5, c.d_h, rng);
  Tensor fp(5, c.d_h);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < c.d_h; ++k) fp(r, k) = f(perm[r], k);
  Tape t(false);
  const Tensor o = t.value(m.contextualize(t, t.constant(f), false, drop));
  const Tensor op = t.value(m.contextualize(t, t.constant(fp), false, drop));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < c.d_h; ++k) CHECK(std::abs(op(r, k) - o(perm[r], k)) <= 1e-12);

  const std::vector<int> ids{5, 9, 10, 11, 12, 13};
  std::vector<int> ids_p{5};
  for (std::size_t r = 0; r < 5; ++r) ids_p.push_back(ids[1 + perm[r]]);
  const Tensor h = t.value(m.encode(t, ids, false, drop));
  const Tensor hp = t.value(m.encode(t, ids_p, false, drop));
  for (std::size_t k = 0; k < c.d_h; ++k) CHECK(std::abs(hp(0, k) - h(0, k)) <= 1e-12);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < c.d_h; ++k)
      CHECK(std::abs(hp(r + 1, k) - h(perm[r] + 1, k)) <= 1e-12);
}

TEST_CASE("decoder and classifier") {
  const ModelConfig c = toy_config(4);
  Model m(c, 13);
  Rng rng(14);
  const Example ex = toy_example(c, 4, rng);
  {
    const ForwardOutput out = m.forward(ex);
    Tape t(false);
    const Tensor p = t.value(t.softmax(t.constant(out.label_logits)));
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double total = 0;
      for (Real v : p.row(r)) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    Tensor shifted = out.label_logits;
    for (std::size_t r = 0; r < shifted.rows(); ++r)
      for (Real& v : shifted.row(r)) v += static_cast<Real>(r * 3.5 + 1);
    CHECK(argmax_labels(shifted) == argmax_labels(out.label_logits));
  }
  zero(m.params().label_decoder.weight);
  zero(m.params().label_decoder.bias);
  zero(m.params().criterion_classifier.weight);
  zero(m.params().criterion_classifier.bias);
  const ForwardOutput out = m.forward(ex);
  Tape t(false);
  const Tensor labels = t.value(t.softmax(t.constant(out.label_logits)));
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(labels[i] == doctest::Approx(0.25));
  const Tensor crit = t.value(t.softmax(t.constant(out.criterion_logits)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(crit[i] == doctest::Approx(0.25));

  Model single(toy_config(1), 3);
  Example one = ex;
  one.augmented[0] = 5;
  one.criterion_id = 0;
  const Tensor p1 = t.value(t.softmax(t.constant(single.forward(one).criterion_logits)));
  CHECK(p1[0] == 1.0);
}

TEST_CASE("the classifier reads row 0 of H only") {
  const ModelConfig c = toy_config();
  Model m(c, 15);
  Rng rng(16);
  Tensor h = random_tensor(5, c.d_h, rng);
  Tape t(false);
  const Tensor a = t.value(m.classify_criterion(t, t.constant(h)));
  for (std::size_t r = 1; r < 5; ++r)
    for (Real& v : h.row(r)) v = static_cast<Real>(rng.uniform() * 10);
  const Tensor b = t.value(m.classify_criterion(t, t.constant(h)));
  CHECK(a == b);
}

TEST_CASE("loss examples") {
  const ModelConfig c = toy_config(4);
  Model m(c, 17);
  Rng rng(18);
  Example ex = toy_example(c, 5, rng);
  Rng drop(0);
  for (Parameter* p : {&m.params().label_decoder.weight, &m.params().label_decoder.bias,
                       &m.params().criterion_classifier.weight,
                       &m.params().criterion_classifier.bias}) {
    zero(*p);
  }
  {
    Tape t(false);
    const double l = t.value(m.sentence_loss(t, ex, false, drop))[0];
    CHECK(std::abs(l - 6 * std::log(4.0)) <= 1e-12);
  }
  // Every gold label S and logits +30 on S and on the gold criterion.
  ex.labels.assign(5, static_cast<int>(Label::S));
  m.params().label_decoder.bias.value[static_cast<int>(Label::S)] = 30;
  m.params().criterion_classifier.bias.value[ex.criterion_id] = 30;
  Tape t(false);
  CHECK(t.value(m.sentence_loss(t, ex, false, drop))[0] <= 1e-9);
}

TEST_CASE("batched loss equals the mean of per-sentence losses") {
  ModelConfig c = toy_config();
  Model m(c, 19);
  Rng rng(20);
  testing::widen_init(m, rng, 0.2);
  std::vector<Example> examples;
  for (std::size_t n : {3u, 6u, 1u}) examples.push_back(toy_example(c, n, rng));
  const Batch batch = make_batch(examples, std::vector<std::size_t>{0, 1, 2});
  CHECK(batch.max_length == 6);
  Rng drop(0);
  Tape t(false);
  double expect = 0;
  for (const Example& ex : examples) expect += t.value(m.sentence_loss(t, ex, false, drop))[0];
  const double got = t.value(m.loss(t, batch, false, drop))[0];
  CHECK(std::abs(got - expect / 3) <= 1e-12);

  // Padded forward of a short row equals its unpadded forward.
  for (std::size_t i = 0; i < 3; ++i) CHECK(batch.row(i).augmented == examples[i].augmented);
}

TEST_CASE("full-model gradient check on a toy model") {
  for (bool bigram : {true, false}) {
    ModelConfig c = toy_config();
    c.use_bigram = bigram;
    Model m(c, 21);
    Rng rng(22);
    testing::widen_init(m, rng, 0.3);
    const Example ex = toy_example(c, 5, rng);
    Rng drop(0);
    const auto r = testing::grad_check(m.parameters(), [&](Tape& t) {
      return m.sentence_loss(t, ex, false, drop);
    });
    CAPTURE(bigram);
    CAPTURE(r.first_failure);
    CHECK(r.failed == 0);
  }
}

TEST_CASE("ablation switches drop their parameters") {
  ModelConfig c = toy_config();
  const std::size_t full = Model(c, 1).parameters().size();
  c.use_bigram = false;
  const std::size_t no_bigram = Model(c, 1).parameters().size();
  c.use_criterion_classifier = false;
  const std::size_t neither = Model(c, 1).parameters().size();
  CHECK(no_bigram == full - 8);
  CHECK(neither == no_bigram - 2);
}

TEST_CASE("same seed builds identical parameters") {
  Model a(toy_config(), 33), b(toy_config(), 33), d(toy_config(), 34);
  const auto pa = std::as_const(a).parameters(), pb = std::as_const(b).parameters(),
             pd = std::as_const(d).parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    differs |= !(pa[i]->value == pd[i]->value);
  }
  CHECK(differs);
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip preserves config, parameters and optimizer state") {
    Model m(toy_config(), 40);
    AdamW opt(m.parameters());
    Rng rng(41);
    const Example ex = toy_example(m.config(), 4, rng);
    Rng drop(0);
    Tape t;
    opt.step(t.backward(m.sentence_loss(t, ex, false, drop)), 1e-3);

    std::stringstream buf;
    write_checkpoint(buf, m, 0xabcdefULL, &opt.state());
    const std::string bytes = buf.str();
    LoadedCheckpoint loaded = read_checkpoint(buf);
    CHECK(loaded.vocab_hash == 0xabcdefULL);
    CHECK(loaded.model.config() == m.config());
    const auto a = std::as_const(m).parameters();
    const auto b = std::as_const(loaded.model).parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->step == 1);
    CHECK(loaded.optimizer->m == opt.state().m);
    CHECK(loaded.optimizer->v == opt.state().v);
    CHECK(loaded.model.forward(ex).label_logits == m.forward(ex).label_logits);

    std::stringstream again;
    write_checkpoint(again, loaded.model, loaded.vocab_hash, &*loaded.optimizer);
    CHECK(again.str() == bytes);
  }

  TEST_CASE("corrupt input is rejected") {
    Model m(toy_config(), 42);
    std::stringstream buf;
    write_checkpoint(buf, m, 1);
    std::string bytes = buf.str();
    {
      std::string bad = bytes;
      bad[0] = 'X';
      std::istringstream in(bad);
      CHECK_THROWS_AS(read_checkpoint(in), DataError);
    }
    {
      std::istringstream in(bytes.substr(0, bytes.size() / 2));
      CHECK_THROWS_AS(read_checkpoint(in), DataError);
    }
    {
      std::istringstream in(bytes);
      CHECK_FALSE(read_checkpoint(in).optimizer.has_value());
    }
  }

  TEST_CASE("config JSON round trip") {
    ModelConfig c = toy_config(3);
    c.use_bigram = false;
    c.dropout = 0.25;
    CHECK(config_from_json(config_to_json(c)) == c);
  }
}

TEST_CASE("segmenter edge cases") {
  std::vector<RawSentence> train{{{"李娜", "进入", "半决赛"}, 0}, {{"李", "娜"}, 1}};
  const Vocab vocab = Vocab::build({"ctb", "pku"}, train);
  ModelConfig c = toy_config();
  c.vocab_size = vocab.unigram_size();
  c.bigram_vocab_size = vocab.bigram_size();
  Model m(c, 50);
  const Segmenter seg(m, vocab);
  CHECK(seg.segment("", "ctb").empty());
  CHECK_THROWS_AS(seg.segment("李娜", "msra"), ConfigError);

  // Whatever the model predicts, words concatenate back to the input minus
  // whitespace and runs stay whole.
  const std::string text = "李娜 abc进入2024半决赛";
  const auto words = seg.segment(text, "pku");
  std::string joined;
  for (const auto& w : words) joined += w;
  CHECK(joined == "李娜abc进入2024半决赛");
  for (const auto& w : words) {
    if (w.find('a') != std::string::npos) CHECK(w.find("abc") != std::string::npos);
    if (w.find('2') != std::string::npos) CHECK(w.find("2024") != std::string::npos);
  }

  // Long text is segmented window by window.
  std::string long_text;
  for (int i = 0; i < 40; ++i) long_text += "李娜进入";
  const auto spans = seg.segment_spans(long_text, 0);
  CHECK(is_partition(spans, 160));
}
