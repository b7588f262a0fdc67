#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "adafuse/error.hpp"
#include "adafuse/gradcheck.hpp"
#include "adafuse/ops.hpp"
#include "adafuse/optim.hpp"
#include "adafuse/params.hpp"
#include "adafuse/tape.hpp"
#include "adafuse/tensor.hpp"
#include "adafuse/tensor_io.hpp"

using namespace adafuse;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

using Builder = std::function<Var(Tape&, const Params&)>;

/// Loss = sum of squares of the op output, checked at 50 coordinates per tensor.
double op_gradcheck(Params& params, const Builder& build, std::uint64_t seed = 1) {
  LossFn loss = [&](Params& p, bool grad) {
    Tape tape;
    Var out = sum_squares(tape, build(tape, p));
    if (grad) {
      tape.backward(out);
      tape.accumulate_into(p);
    }
    return tape.value(out)[0];
  };
  Rng rng = make_rng(seed, 0);
  return finite_difference_check(loss, params, 1e-4, 50, rng).max_relative_error;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_FALSE(t.has_grad());
  CHECK(t.grad().size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
}

TEST_CASE("affine examples") {
  const Tensor id = affine(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}));
  CHECK(id == Tensor::matrix({{1, 2}}));
  const Tensor out = affine(Tensor::matrix({{1, 1}}), Tensor::matrix({{2, 3}, {4, 5}}), Tensor::vector({1, 1}));
  CHECK(out == Tensor::matrix({{7, 9}}));
  Rng rng = make_rng(1, 1);
  try {
    affine(random_tensor({5, 3}, rng), random_tensor({4, 2}, rng), Tensor({2}));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[5x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("conv2d examples") {
  Rng rng = make_rng(2, 0);
  const Tensor x = random_tensor({1, 5, 5}, rng);
  CHECK(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0) == x);

  const Tensor ones({1, 4, 4}, 1.0);
  const Tensor out = conv2d(ones, Tensor({1, 1, 3, 3}, 1.0), Tensor({1}), 1, 0);
  CHECK(out.shape() == Shape{1, 2, 2});
  for (double v : out.data()) CHECK(v == 9.0);

  CHECK(conv2d(random_tensor({3, 8, 8}, rng), random_tensor({16, 3, 3, 3}, rng), Tensor({16}), 1, 1).shape() ==
        Shape{16, 8, 8});
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor({1}), 1, 0), DimensionError);
}

TEST_CASE("conv2d and maxpool shapes follow the formulas") {
  Rng rng = make_rng(3, 0);
  for (std::size_t h = 1; h <= 9; ++h) {
    for (std::size_t w = 1; w <= 9; w += 2) {
      for (std::size_t k = 1; k <= 5; k += 2) {
        for (std::size_t stride = 1; stride <= 3; ++stride) {
          for (std::size_t pad = 0; pad <= 2; ++pad) {
            if (h + 2 * pad < k || w + 2 * pad < k) {
              CHECK_THROWS_AS(conv2d(Tensor({2, h, w}), Tensor({3, 2, k, k}), Tensor({3}), stride, pad),
                              DimensionError);
              continue;
            }
            const Tensor out = conv2d(random_tensor({2, h, w}, rng), random_tensor({3, 2, k, k}, rng),
                                      Tensor({3}), stride, pad);
            CHECK(out.shape() == Shape{3, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1});
          }
        }
        for (std::size_t stride = 1; stride <= 3; ++stride) {
          if (h < k || w < k) {
            CHECK_THROWS_AS(maxpool2d(Tensor({2, h, w}), k, stride), DimensionError);
            continue;
          }
          CHECK(maxpool2d(random_tensor({2, h, w}, rng), k, stride).shape() ==
                Shape{2, (h - k) / stride + 1, (w - k) / stride + 1});
        }
      }
    }
  }
}

TEST_CASE("maxpool2d examples") {
  const Tensor m({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(maxpool2d(m, 2, 2) == Tensor({1, 1, 1}, std::vector<double>{4}));
  const Tensor c = maxpool2d(Tensor({2, 4, 4}, 0.25), 2, 2);
  for (double v : c.data()) CHECK(v == 0.25);
  CHECK(maxpool2d(Tensor({64, 8, 8}), 2, 2).shape() == Shape{64, 4, 4});
  CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 3}), 2, 2), DimensionError);
}

TEST_CASE("maxpool2d routes the gradient to the first maximum") {
  Tape tape;
  Var x = tape.variable(Tensor({1, 2, 2}, std::vector<double>{5, 5, 1, 5}));
  Var y = maxpool2d(tape, x, 2, 2);
  tape.backward(y);
  const auto g = tape.grad(x);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("relu examples and gradient") {
  CHECK(relu(Tensor::vector({-1, 0, 2})) == Tensor::vector({0, 0, 2}));
  CHECK(relu(Tensor::vector({-3, -0.5})) == Tensor::vector({0, 0}));
  Tape tape;
  Var x = tape.variable(Tensor::vector({-1, 2}));
  Var s = sum_squares(tape, relu(tape, x));
  tape.backward(s);
  CHECK(tape.grad(x)[0] == 0.0);
  CHECK(tape.grad(x)[1] == 4.0);  // upstream d(y^2)/dy at y = 2
}

TEST_CASE("dropout") {
  Rng rng = make_rng(4, 0);
  const Tensor x = random_tensor({100}, rng);
  CHECK(dropout(x, 0.0, rng, true) == x);
  for (double rate : {0.0, 0.3, 0.9}) CHECK(dropout(x, rate, rng, false) == x);
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ParameterError);
  CHECK_THROWS_AS(dropout(x, -0.1, rng, true), ParameterError);

  const Tensor ones({100000}, 1.0);
  const Tensor d = dropout(ones, 0.5, rng, true);
  double sum = 0;
  std::size_t zeros = 0;
  for (double v : d.data()) {
    sum += v;
    zeros += v == 0.0;
    CHECK((v == 0.0 || v == 2.0));
  }
  CHECK(std::abs(sum / 1e5 - 1.0) < 0.01);
  CHECK(zeros > 49000);
  CHECK(zeros < 51000);

  Tape tape;
  Var v = tape.variable(x);
  CHECK(dropout(tape, v, 0.5, rng, false).id == v.id);
}

TEST_CASE("softmax examples and properties") {
  CHECK(softmax(Tensor::vector({0, 0})) == Tensor::vector({0.5, 0.5}));
  const Tensor big = softmax(Tensor::vector({1000, 1000, 1000}));
  for (double v : big.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Tensor q = softmax(Tensor::vector({std::log(1.0), std::log(3.0)}));
  CHECK(std::abs(q[0] - 0.25) < 1e-15);
  CHECK(std::abs(q[1] - 0.75) < 1e-15);

  Rng rng = make_rng(5, 0);
  std::uniform_real_distribution<double> shift(-500, 500);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + trial % 7;
    const Tensor z = random_tensor({k}, rng, -30, 30);
    const Tensor p = softmax(z);
    double sum = 0;
    for (double v : p.data()) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    Tensor zs = z;
    const double c = shift(rng);
    for (auto& v : zs.data()) v += c;
    const Tensor ps = softmax(zs);
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(ps[i] - p[i]) < 1e-12);
  }
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy_loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}})) == 0.0);
  CHECK(cross_entropy_loss(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{1, 0}})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double a = cross_entropy_loss(Tensor::matrix({{0.2, 0.8}}), Tensor::matrix({{0, 1}}));
  const double b = cross_entropy_loss(Tensor::matrix({{0.6, 0.4}}), Tensor::matrix({{0, 1}}));
  const double ab = cross_entropy_loss(Tensor::matrix({{0.2, 0.8}, {0.6, 0.4}}), Tensor::matrix({{0, 1}, {0, 1}}));
  CHECK(ab == doctest::Approx((a + b) / 2).epsilon(1e-15));
  CHECK_THROWS_AS(cross_entropy_loss(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{0.5, 0.5}})), InputError);
  CHECK_THROWS_AS(cross_entropy_loss(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{1, 1}})), InputError);
  // clamped at log(1e-12)
  CHECK(cross_entropy_loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}})) ==
        doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("sgd_step") {
  Params p;
  p.add("w", Tensor::vector({1.0}));
  p.add("frozen", Tensor::vector({3.0}), false);
  p.at("w").grad()[0] = 2.0;
  p.at("frozen").grad()[0] = 5.0;
  sgd_step(p, 0.1, 0.0);
  CHECK(p.at("w")[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.at("frozen")[0] == 3.0);
  CHECK(p.at("w").grad()[0] == 0.0);

  Params q;
  q.add("w", Tensor::vector({1.0, -2.0}));
  q.at("w").grad()[0] = 7;
  q.at("w").grad()[1] = -1;
  const Params before = q;
  sgd_step(q, 0.0, 0.9);
  CHECK(q.same_values(before));

  Params missing;
  missing.add("w", Tensor::vector({1.0}));
  CHECK_THROWS_AS(sgd_step(missing, 0.1, 0.0), StateError);
}

TEST_CASE("sgd_step with zero momentum is p - lr*grad exactly") {
  Rng rng = make_rng(6, 0);
  Params p;
  p.add("a", random_tensor({17}, rng));
  const Tensor start = p.at("a");
  const Tensor grad = random_tensor({17}, rng);
  for (std::size_t i = 0; i < 17; ++i) p.at("a").grad()[i] = grad[i];
  sgd_step(p, 0.037, 0.0);
  for (std::size_t i = 0; i < 17; ++i) CHECK(p.at("a")[i] == start[i] - 0.037 * grad[i]);
}

TEST_CASE("sgd_step momentum accumulates velocity") {
  Params p;
  p.add("w", Tensor::vector({0.0}));
  p.at("w").grad()[0] = 1.0;
  sgd_step(p, 0.1, 0.5);  // v = -0.1
  p.at("w").grad()[0] = 1.0;
  sgd_step(p, 0.1, 0.5);  // v = -0.05 - 0.1
  CHECK(p.at("w")[0] == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("finite difference check examples") {
  Params p;
  p.add("p", Tensor::vector({1, 2}));
  LossFn sq = [](Params& ps, bool grad) {
    Tape tape;
    Var l = sum_squares(tape, tape.parameter(ps, "p"));
    if (grad) {
      tape.backward(l);
      tape.accumulate_into(ps);
    }
    return tape.value(l)[0];
  };
  Rng rng = make_rng(7, 0);
  const auto report = finite_difference_check(sq, p, 1e-4, 50, rng);
  CHECK(p.at("p").grad()[0] == 2.0);
  CHECK(p.at("p").grad()[1] == 4.0);
  CHECK(report.max_relative_error < 1e-6);
  CHECK(report.coordinates_checked == 2);

  LossFn constant = [](Params& ps, bool grad) {
    if (grad) ps.at("p").grad();
    return 3.0;
  };
  CHECK(finite_difference_check(constant, p, 1e-4, 50, rng).max_relative_error == 0.0);

  int calls = 0;
  LossFn flaky = [&](Params&, bool) { return static_cast<double>(++calls); };
  CHECK_THROWS_AS(finite_difference_check(flaky, p, 1e-4, 50, rng), DeterminismError);
}

TEST_CASE("every differentiable op passes the gradient check") {
  Rng rng = make_rng(8, 0);
  SUBCASE("affine") {
    Params p;
    p.add("x", random_tensor({3, 5}, rng));
    p.add("w", random_tensor({5, 4}, rng));
    p.add("b", random_tensor({4}, rng));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) {
            return affine(t, t.parameter(q, "x"), t.parameter(q, "w"), t.parameter(q, "b"));
          }) < 1e-3);
  }
  SUBCASE("conv2d") {
    Params p;
    p.add("x", random_tensor({2, 3, 7, 6}, rng));
    p.add("k", random_tensor({4, 3, 3, 3}, rng));
    p.add("b", random_tensor({4}, rng));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) {
            return conv2d(t, t.parameter(q, "x"), t.parameter(q, "k"), t.parameter(q, "b"), 2, 1);
          }) < 1e-3);
  }
  SUBCASE("maxpool2d") {
    Params p;
    p.add("x", random_tensor({2, 6, 6}, rng));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) { return maxpool2d(t, t.parameter(q, "x"), 2, 2); }) <
          1e-3);
  }
  SUBCASE("relu") {
    Params p;
    p.add("x", random_tensor({40}, rng));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) { return relu(t, t.parameter(q, "x")); }) < 1e-3);
  }
  SUBCASE("dropout with a fixed mask") {
    Params p;
    p.add("x", random_tensor({60}, rng));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) {
            Rng mask = make_rng(99, 0);
            return dropout(t, t.parameter(q, "x"), 0.4, mask, true);
          }) < 1e-3);
  }
  SUBCASE("softmax") {
    Params p;
    p.add("z", random_tensor({3, 5}, rng, -3, 3));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) { return softmax(t, t.parameter(q, "z")); }) < 1e-3);
  }
  SUBCASE("cross entropy") {
    Params p;
    p.add("z", random_tensor({4, 3}, rng, -2, 2));
    const std::vector<int> labels{0, 2, 1, 2};
    const Tensor y = one_hot(labels, 3);
    LossFn loss = [&](Params& q, bool grad) {
      Tape t;
      Var l = cross_entropy_loss(t, softmax(t, t.parameter(q, "z")), y);
      if (grad) {
        t.backward(l);
        t.accumulate_into(q);
      }
      return t.value(l)[0];
    };
    CHECK(finite_difference_check(loss, p, 1e-4, 50, rng).max_relative_error < 1e-3);
  }
  SUBCASE("mixture and concat") {
    Params p;
    p.add("g", random_tensor({3, 2}, rng, -1, 1));
    p.add("a", random_tensor({3, 4}, rng, -1, 1));
    p.add("b", random_tensor({3, 4}, rng, -1, 1));
    CHECK(op_gradcheck(p, [](Tape& t, const Params& q) {
            const Var fs[] = {softmax(t, t.parameter(q, "a")), softmax(t, t.parameter(q, "b"))};
            const Var m = mixture(t, softmax(t, t.parameter(q, "g")), fs);
            const Var parts[] = {m, t.parameter(q, "a")};
            return concat_columns(t, parts);
          }) < 1e-3);
  }
}

TEST_CASE("MDTF round trip and corruption") {
  Rng rng = make_rng(9, 0);
  const Tensor t = random_tensor({2, 3, 4}, rng, -1e6, 1e6);
  const auto bytes = encode_mdtf(t);
  CHECK(bytes.size() == 4 + 4 + 3 * 4 + 24 * 8);
  CHECK(bytes[0] == 'M');
  CHECK(bytes[4] == 3);  // rank, little endian
  CHECK(bytes[8] == 2);
  CHECK(decode_mdtf(bytes) == t);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_mdtf(truncated, "x.mdtf"), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_mdtf(trailing), ParseError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_mdtf(magic), ParseError);

  const auto dir = std::filesystem::temp_directory_path() / "adafuse_test_mdtf";
  std::filesystem::create_directories(dir);
  write_mdtf(dir / "t.mdtf", t);
  CHECK(read_mdtf(dir / "t.mdtf") == t);
  std::filesystem::resize_file(dir / "t.mdtf", 20);
  try {
    read_mdtf(dir / "t.mdtf");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("t.mdtf") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("params hashing and freeze flags") {
  Params p;
  p.add("a", Tensor::vector({1, 2}));
  CHECK_THROWS_AS(p.add("a", Tensor::vector({1})), ConfigError);
  Params q = p;
  CHECK(p.hash() == q.hash());
  q.at("a")[1] = 2.0000000001;
  CHECK(p.hash() != q.hash());
  CHECK_FALSE(p.same_values(q));
  p.set_trainable(false);
  CHECK_FALSE(p.any_trainable());
}
