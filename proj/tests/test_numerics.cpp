#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mccws/errors.hpp"
#include "mccws/random.hpp"
#include "mccws/tape.hpp"
#include "support/gradcheck.hpp"

using namespace mccws;
using testing::grad_check;
using testing::random_param;

namespace {

// Weighted sum with fixed random weights so every output element matters.
Var weighted_sum(Tape& t, Var x, const Tensor& weights) {
  return t.sum(t.mul(x, t.constant(weights)));
}

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(2 * rng.uniform() - 1);
  return out;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = static_cast<Real>(acc);
    }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  Tensor t(2, 3, 1.5);
  CHECK(t.shape() == std::vector<std::size_t>{2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor(2, 2, std::vector<Real>{1, 2, 3}), ShapeError);
  CHECK(shape_string(t) == "[2x3]");
}

TEST_CASE("matmul examples") {
  Tape t;
  const Var id = t.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  const Tensor m = Tensor::from_rows({{2, 3}, {5, 7}});
  CHECK(t.value(t.matmul(id, t.constant(m))) == m);
  const Var row = t.constant(Tensor::from_rows({{1, 2}}));
  const Var col = t.constant(Tensor::from_rows({{3}, {4}}));
  CHECK(t.value(t.matmul(row, col))[0] == 11);
  CHECK_THROWS_AS(t.matmul(row, row), ShapeError);
}

TEST_CASE("gradient of sum(A.B) wrt A") {
  Parameter a{"a", Tensor::from_rows({{1, 2}}), true};
  Tape t;
  const Var loss = t.sum(t.matmul(t.param(a), t.constant(Tensor::from_rows({{3}, {4}}))));
  const Gradients g = t.backward(loss);
  CHECK(g.get(a) == Tensor::from_rows({{3, 4}}));
}

TEST_CASE("gemm kernels agree with the naive triple loop") {
  Rng rng(3);
  const Tensor a = random_tensor(4, 5, rng);
  const Tensor b = random_tensor(5, 3, rng);
  const Tensor expect = naive_matmul(a, b);
  Tensor nn(4, 3), nt(4, 3), tn(4, 3);
  kernels::gemm_nn(a, b, nn);
  kernels::gemm_nt(a, transpose(b), nt);
  kernels::gemm_tn(transpose(a), b, tn);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(nn[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(nt[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(tn[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax examples") {
  Tape t;
  const Tensor uniform = t.value(t.softmax(t.constant(Tensor(1, 4, 0.0))));
  for (std::size_t i = 0; i < 4; ++i) CHECK(uniform[i] == doctest::Approx(0.25));

  const Tensor big = t.value(t.softmax(t.constant(Tensor::from_rows({{1000, 0}}))));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));

  const Tensor s = t.value(t.softmax(t.constant(Tensor::from_rows({{1, 2, 3}}))));
  CHECK(std::abs(s[0] - 0.09003) <= 1e-5);
  CHECK(std::abs(s[1] - 0.24473) <= 1e-5);
  CHECK(std::abs(s[2] - 0.66524) <= 1e-5);
}

TEST_CASE("softmax rows sum to one and ignore constant shifts") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor(3, 6, rng);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 3; ++r)
      for (Real& v : shifted.row(r)) v += static_cast<Real>(10.0 * r - 7.0);
    Tape t;
    const Tensor a = t.value(t.softmax(t.constant(x)));
    const Tensor b = t.value(t.softmax(t.constant(shifted)));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        total += a(r, c);
        CHECK(a(r, c) > 0);
        CHECK(std::abs(a(r, c) - b(r, c)) <= 1e-12);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax masks trailing columns") {
  Tape t;
  const Tensor s = t.value(t.softmax(t.constant(Tensor::from_rows({{1, 1, 50}})), 2));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(s[2] == 0);
}

TEST_CASE("layer_norm examples") {
  Parameter gain{"g", Tensor(1, 3, 1.0), false};
  Parameter bias{"b", Tensor(1, 3, 0.0), false};
  Tape t;
  const Var g = t.param(gain), b = t.param(bias);
  const Tensor c = t.value(t.layer_norm(t.constant(Tensor(2, 3, 4.2)), g, b, 1e-12));
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == 0);

  Parameter g2{"g2", Tensor(1, 2, 1.0), false};
  Parameter b2{"b2", Tensor(1, 2, 0.0), false};
  const Tensor n = t.value(
      t.layer_norm(t.constant(Tensor::from_rows({{1, -1}})), t.param(g2), t.param(b2), 1e-12));
  CHECK(n[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(n[1] == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const std::size_t d = 8;
    Parameter gain{"g", Tensor(1, d, 1.0), false};
    Parameter bias{"b", Tensor(1, d, 0.0), false};
    Tensor x = random_tensor(4, d, rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= 5;
    Tape t;
    const Tensor y = t.value(t.layer_norm(t.constant(x), t.param(gain), t.param(bias), 1e-12));
    for (std::size_t r = 0; r < 4; ++r) {
      double mean = 0, var = 0;
      for (Real v : y.row(r)) mean += v;
      mean /= d;
      for (Real v : y.row(r)) var += (v - mean) * (v - mean);
      var /= d;
      CHECK(std::abs(mean) <= 1e-10);
      CHECK(std::abs(var - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("dropout") {
  Rng rng(17);
  Tape t;
  const Tensor ones(1, 10000, 1.0);
  const Var x = t.constant(ones);
  CHECK(t.value(t.dropout(x, 0.0, true, rng)) == ones);
  CHECK(t.value(t.dropout(x, 0.7, false, rng)) == ones);

  const Tensor y = t.value(t.dropout(x, 0.5, true, rng));
  std::size_t zeros = 0;
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0) ++zeros;
    else CHECK(y[i] == 2.0);
    total += y[i];
  }
  const double frac = static_cast<double>(zeros) / 10000.0;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);
  CHECK(std::abs(total / 10000.0 - 1.0) <= 0.05);

  CHECK_THROWS_AS(t.dropout(x, 1.0, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(t.dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST_CASE("embedding lookup") {
  Parameter table{"table", Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}), true};
  Tape t;
  const Var tv = t.param(table);
  const std::vector<int> first{0};
  CHECK(t.value(t.embedding(tv, first)) == Tensor::from_rows({{1, 2}}));
  const Tensor empty = t.value(t.embedding(tv, std::vector<int>{}));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 2);
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(t.embedding(tv, bad), std::out_of_range);

  const std::vector<int> twice{2, 2};
  const Tensor w = Tensor::from_rows({{0.5, -1}, {2, 3}});
  const Var loss = t.sum(t.mul(t.embedding(tv, twice), t.constant(w)));
  const Gradients g = t.backward(loss);
  CHECK(g.get(table) == Tensor::from_rows({{0, 0}, {0, 0}, {2.5, 2}}));

  const auto fd = testing::grad_check({&table}, [&](Tape& tt) {
    return tt.sum(tt.mul(tt.embedding(tt.param(table), twice), tt.constant(w)));
  });
  CHECK(fd.failed == 0);
}

TEST_CASE("cross_entropy examples") {
  Tape t;
  const std::vector<int> targets{0, 1, 2, 3, 1};
  const Var uniform = t.constant(Tensor(5, 4, 0.3));
  CHECK(t.value(t.cross_entropy(uniform, targets))[0] == doctest::Approx(std::log(4.0)));

  Tensor favoured(5, 4, 0.0);
  for (std::size_t r = 0; r < 5; ++r) favoured(r, targets[r]) = 30;
  CHECK(t.value(t.cross_entropy(t.constant(favoured), targets))[0] < 1e-12);

  Rng rng(99);
  const Tensor logits = random_tensor(5, 4, rng);
  double expect = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(static_cast<double>(logits(r, c)));
    expect += -std::log(std::exp(static_cast<double>(logits(r, targets[r]))) / z);
  }
  const Var lv = t.constant(logits);
  CHECK(std::abs(t.value(t.cross_entropy(lv, targets))[0] - expect / 5) <= 1e-10);
  CHECK(std::abs(t.value(t.cross_entropy(lv, targets, {}, Reduction::Sum))[0] - expect) <= 1e-10);

  const std::vector<std::uint8_t> mask{1, 0, 1, 0, 0};
  double masked = 0;
  for (std::size_t r : {0u, 2u}) {
    double z = 0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(static_cast<double>(logits(r, c)));
    masked += -std::log(std::exp(static_cast<double>(logits(r, targets[r]))) / z);
  }
  CHECK(std::abs(t.value(t.cross_entropy(lv, targets, mask))[0] - masked / 2) <= 1e-10);

  const std::vector<std::uint8_t> none(5, 0);
  CHECK_THROWS(t.cross_entropy(lv, targets, none));
}

TEST_CASE("backward examples") {
  Parameter w{"w", Tensor::from_rows({{1, -2, 3}, {0.5, 4, 2}}), true};
  Parameter unused{"unused", Tensor(2, 2, 1.0), true};
  Tape t;
  t.param(unused);
  const Gradients g = t.backward(t.sum(t.param(w)));
  CHECK(g.get(w) == Tensor(2, 3, 1.0));
  CHECK(g.get(unused) == Tensor(2, 2, 0.0));

  Rng rng(8);
  const Tensor x = random_tensor(3, 2, rng);
  const auto r = testing::grad_check({&w}, [&](Tape& tt) {
    const Var y = tt.matmul(tt.param(w), tt.constant(x));
    return tt.sum(tt.mul(y, y));
  });
  CHECK(r.failed == 0);
}

TEST_CASE("backward rejects misuse") {
  Parameter w{"w", Tensor(2, 2, 1.0), true};
  {
    Tape t;
    CHECK_THROWS(t.backward(t.param(w)));
  }
  {
    Tape t;
    const Var loss = t.sum(t.param(w));
    t.backward(loss);
    CHECK_THROWS(t.backward(loss));
  }
  {
    Tape t(false);
    CHECK_THROWS(t.backward(t.sum(t.param(w))));
  }
}

TEST_CASE("every differentiable op passes the finite-difference check on 5 seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    Parameter a = random_param("a", 3, 4, rng);
    Parameter b = random_param("b", 4, 3, rng);
    Parameter c = random_param("c", 3, 4, rng);
    Parameter row = random_param("row", 1, 4, rng);
    Parameter gain = random_param("gain", 1, 4, rng);
    Parameter table = random_param("table", 5, 4, rng);
    const Tensor w34 = random_tensor(3, 4, rng);
    const Tensor w33 = random_tensor(3, 3, rng);
    const Tensor w32 = random_tensor(3, 2, rng);
    const Tensor w38 = random_tensor(3, 8, rng);
    const std::vector<int> ids{4, 0, 4};
    const std::vector<int> targets{1, 3, 0};
    const std::vector<std::uint8_t> mask{1, 0, 1};

    struct Case {
      const char* name;
      std::vector<Parameter*> params;
      testing::LossBuilder build;
    };
    const std::vector<Case> cases{
        {"matmul", {&a, &b},
         [&](Tape& t) { return weighted_sum(t, t.matmul(t.param(a), t.param(b)), w33); }},
        {"matmul_nt", {&a, &c},
         [&](Tape& t) { return weighted_sum(t, t.matmul_nt(t.param(a), t.param(c)), w33); }},
        {"linear", {&a, &c, &row},
         [&](Tape& t) {
           return weighted_sum(t, t.linear(t.param(a), t.param(c), t.slice_cols(t.param(row), 0, 3)),
                               w33);
         }},
        {"add/sub/mul", {&a, &c},
         [&](Tape& t) {
           const Var x = t.param(a), y = t.param(c);
           return weighted_sum(t, t.mul(t.add(x, y), t.sub(x, y)), w34);
         }},
        {"add_row/scale/one_minus", {&a, &row},
         [&](Tape& t) {
           return weighted_sum(t, t.one_minus(t.scale(t.add_row(t.param(a), t.param(row)), 1.7)),
                               w34);
         }},
        {"tanh", {&a}, [&](Tape& t) { return weighted_sum(t, t.tanh(t.param(a)), w34); }},
        {"sigmoid", {&a}, [&](Tape& t) { return weighted_sum(t, t.sigmoid(t.param(a)), w34); }},
        {"gelu", {&a}, [&](Tape& t) { return weighted_sum(t, t.gelu(t.param(a)), w34); }},
        {"softmax", {&a}, [&](Tape& t) { return weighted_sum(t, t.softmax(t.param(a)), w34); }},
        {"masked softmax", {&a},
         [&](Tape& t) { return weighted_sum(t, t.softmax(t.param(a), 3), w34); }},
        {"layer_norm", {&a, &gain, &row},
         [&](Tape& t) {
           return weighted_sum(t, t.layer_norm(t.param(a), t.param(gain), t.param(row), 1e-12),
                               w34);
         }},
        {"embedding", {&table},
         [&](Tape& t) { return weighted_sum(t, t.embedding(t.param(table), ids), w34); }},
        {"cross_entropy", {&a},
         [&](Tape& t) { return t.cross_entropy(t.param(a), targets, mask); }},
        {"cross_entropy sum", {&a},
         [&](Tape& t) { return t.cross_entropy(t.param(a), targets, {}, Reduction::Sum); }},
        {"slices", {&a},
         [&](Tape& t) {
           const Var x = t.param(a);
           return t.add(weighted_sum(t, t.slice_cols(t.slice_rows(x, 0, 3), 1, 3), w32),
                        t.sum(t.slice_rows(x, 1, 2)));
         }},
        {"concat_cols", {&a, &c},
         [&](Tape& t) {
           const std::vector<Var> parts{t.param(a), t.tanh(t.param(c))};
           return weighted_sum(t, t.concat_cols(parts), w38);
         }},
    };
    for (const Case& cs : cases) {
      CAPTURE(seed);
      CAPTURE(cs.name);
      const auto r = grad_check(cs.params, cs.build);
      CAPTURE(r.first_failure);
      CHECK(r.failed == 0);
    }
  }
}

TEST_CASE("backward is bit-identical across repeated runs") {
  Rng rng(4);
  Parameter a = random_param("a", 3, 4, rng);
  Parameter gain = random_param("g", 1, 4, rng);
  Parameter bias = random_param("b", 1, 4, rng);
  auto run = [&] {
    Rng drop(12);
    Tape t;
    const Var y = t.dropout(t.layer_norm(t.param(a), t.param(gain), t.param(bias), 1e-12), 0.3,
                            true, drop);
    const Gradients g = t.backward(t.sum(t.mul(y, t.softmax(y))));
    return std::vector<Tensor>{g.get(a), g.get(gain), g.get(bias)};
  };
  CHECK(run() == run());
}

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next();
      CHECK(x == b.next());
      differs |= x != c.next();
    }
    CHECK(differs);
  }

  TEST_CASE("uniform, below, normal and truncated_normal stay in range") {
    Rng rng(1);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0 && u < 1));
      CHECK(rng.below(7) < 7);
      const double z = rng.normal();
      sum += z;
      sq += z * z;
      CHECK(std::abs(rng.truncated_normal(0.02)) <= 0.04);
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
  }

  TEST_CASE("shuffle is a permutation") {
    Rng rng(5);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
    CHECK(v != expect);
  }

  TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  }
}
