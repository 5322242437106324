// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "sir/ndgrad.hpp"
#include "sir/random.hpp"

namespace nd = sir::nd;

namespace {

nd::Tensor random_tensor(sir::Pcg32& rng, nd::Shape shape) {
  nd::Tensor t = nd::Tensor::zeros(std::move(shape));
  for (auto& x : t.values()) {
    x = rng.uniform(-1.0, 1.0);
  }
  return t;
}

// Max relative error between backward() and central differences for a
// scalar function of several inputs.
double fd_max_rel(std::vector<nd::Tensor> inputs, const std::function<nd::Var(const std::vector<nd::Var>&)>& f) {
  std::vector<nd::Var> leaves;
  for (const auto& t : inputs) {
    leaves.push_back(nd::leaf(t));
  }
  nd::backward(f(leaves));
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<nd::Var> vs;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          nd::Tensor t = inputs[j];
          if (j == k) {
            t[i] += delta;
          }
          vs.push_back(nd::constant(t));
        }
        return f(vs).item();
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      const double analytic = leaves[k].grad()[i];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
    }
  }
  return worst;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(nd::Tensor({2, 3}, std::vector<double>(5)), sir::DimensionError);
  EXPECT_EQ(nd::Tensor::zeros({2, 3}).size(), 6u);
}

TEST(Matmul, IdentityLeavesInputUnchanged) {
  const auto eye = nd::constant(nd::Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const auto x = nd::constant(nd::Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(nd::matmul(eye, x).value(), x.value());
}

TEST(Matmul, RowTimesColumn) {
  const auto out = nd::matmul(nd::constant(nd::Tensor::matrix(1, 2, {1, 2})),
                              nd::constant(nd::Tensor::matrix(2, 1, {3, 4})));
  EXPECT_EQ(out.shape(), (nd::Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.item(), 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    nd::matmul(nd::constant(nd::Tensor::zeros({2, 3})), nd::constant(nd::Tensor::zeros({2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const sir::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  sir::Pcg32 rng(11);
  const double err = fd_max_rel({random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})},
                                [](const auto& v) { return nd::sum(nd::matmul(v[0], v[1]) * nd::matmul(v[0], v[1])); });
  EXPECT_LT(err, 1e-6);
}

TEST(Elementwise, Relu) {
  const auto out = nd::relu(nd::constant(nd::Tensor::vector({-1, 2})));
  EXPECT_EQ(out.value().data(), (std::vector<double>{0, 2}));
}

TEST(Elementwise, LogInvertsExp) {
  const auto out = nd::log(nd::exp(nd::constant(nd::Tensor::vector({0.3, -1.2}))));
  EXPECT_NEAR(out.value()[0], 0.3, 1e-15);
  EXPECT_NEAR(out.value()[1], -1.2, 1e-15);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(nd::log(nd::constant(nd::Tensor::vector({1.0, 0.0}))), sir::DomainError);
}

TEST(Elementwise, OverflowIsNumericError) {
  EXPECT_THROW(nd::exp(nd::constant(nd::Tensor::vector({1000.0}))), sir::NumericError);
}

TEST(Elementwise, OnlyScalarBroadcasts) {
  const auto a = nd::constant(nd::Tensor::vector({1, 2, 3}));
  EXPECT_EQ((a * 2.0).value().data(), (std::vector<double>{2, 4, 6}));
  EXPECT_THROW(a + nd::constant(nd::Tensor::vector({1, 2})), sir::DimensionError);
}

TEST(Elementwise, MulGradientIsOtherOperand) {
  sir::Pcg32 rng(5);
  const auto a = nd::leaf(random_tensor(rng, {2, 3}));
  const auto b = nd::leaf(random_tensor(rng, {2, 3}));
  nd::backward(nd::sum(a * b));
  EXPECT_EQ(a.grad().data(), b.value().data());
  EXPECT_LT(fd_max_rel({random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
                       [](const auto& v) { return nd::sum(v[0] * v[1]); }),
            1e-6);
}

TEST(Elementwise, GradientsOfEveryOpMatchFiniteDifferences) {
  sir::Pcg32 rng(21);
  nd::Tensor x = random_tensor(rng, {5});
  nd::Tensor y = random_tensor(rng, {5});
  for (auto& v : y.values()) {
    v = std::abs(v) + 0.5;  // keep log away from zero
  }
  const std::vector<std::pair<const char*, std::function<nd::Var(const std::vector<nd::Var>&)>>> cases{
      {"add", [](const auto& v) { return nd::sum((v[0] + v[1]) * (v[0] + v[1])); }},
      {"sub", [](const auto& v) { return nd::sum((v[0] - v[1]) * v[0]); }},
      {"neg", [](const auto& v) { return nd::sum(-v[0] * v[1]); }},
      {"relu", [](const auto& v) { return nd::sum(nd::relu(v[0]) * v[1]); }},
      {"abs", [](const auto& v) { return nd::sum(nd::abs(v[0]) * v[1]); }},
      {"exp", [](const auto& v) { return nd::sum(nd::exp(v[0]) * v[1]); }},
      {"log", [](const auto& v) { return nd::sum(nd::log(v[1]) * v[0]); }},
      {"mean", [](const auto& v) { return nd::mean(v[0] * v[1]); }},
      {"softmax", [](const auto& v) { return nd::sum(nd::softmax(v[0]) * v[1]); }},
      {"slice", [](const auto& v) { return nd::sum(nd::slice(v[0], 1, 4) * nd::slice(v[1], 0, 3)); }},
      {"gather", [](const auto& v) { return nd::sum(nd::gather(v[0], {4, 0, 0, 2}) * nd::gather(v[1], {1, 2, 3, 4})); }},
      {"concat", [](const auto& v) { return nd::sum(nd::concat({v[0], v[1]}) * nd::concat({v[1], v[0]})); }},
      {"element", [](const auto& v) { return nd::element(v[0], 3) * nd::element(v[1], 2); }},
  };
  for (const auto& [name, f] : cases) {
    EXPECT_LT(fd_max_rel({x, y}, f), 1e-6) << name;
  }
}

TEST(Softmax, ConstantLogitsGiveUniform) {
  for (double c : {-3.0, 0.0, 7.5}) {
    const auto p = nd::softmax(nd::constant(nd::Tensor::vector({c, c, c, c})));
    for (double v : p.value().values()) {
      EXPECT_DOUBLE_EQ(v, 0.25);
    }
  }
}

TEST(Softmax, ZeroAndLogThree) {
  const auto p = nd::softmax(nd::constant(nd::Tensor::vector({0.0, std::log(3.0)})));
  EXPECT_NEAR(p.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(p.value()[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  sir::Pcg32 rng(3);
  nd::Tensor logits = random_tensor(rng, {8});
  nd::Tensor shifted = logits;
  for (auto& v : shifted.values()) {
    v += 100.0;
  }
  const auto a = nd::softmax(nd::constant(logits));
  const auto b = nd::softmax(nd::constant(shifted));
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(a.value()[i], b.value()[i], 1e-12);
  }
}

TEST(Softmax, ProbabilityVectorWithMatchingArgmax) {
  sir::Pcg32 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    nd::Tensor logits = random_tensor(rng, {n});
    if (trial % 3 == 0) {
      logits[n - 1] = logits[0];  // exercise ties
    }
    const auto p = nd::softmax(nd::constant(logits));
    double total = 0.0;
    for (double v : p.value().values()) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const auto& pv = p.value().data();
    const auto& lv = logits.data();
    EXPECT_EQ(std::max_element(pv.begin(), pv.end()) - pv.begin(), std::max_element(lv.begin(), lv.end()) - lv.begin());
  }
}

TEST(Softmax, EmptyInputRejected) {
  EXPECT_THROW(nd::softmax(nd::constant(nd::Tensor::vector({}))), sir::ArgumentError);
}

TEST(Backward, SumGivesOnes) {
  const auto x = nd::leaf(nd::Tensor::vector({1, 2, 3, 4, 5}));
  nd::backward(nd::sum(x));
  EXPECT_EQ(x.grad().data(), std::vector<double>(5, 1.0));
}

TEST(Backward, SquareAtThree) {
  const auto x = nd::leaf(nd::Tensor::scalar(3.0));
  nd::backward(x * x);
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  const auto x = nd::leaf(nd::Tensor::scalar(2.0));
  const auto y = x * x;
  nd::backward(y * y + y);  // x^4 + x^2
  EXPECT_DOUBLE_EQ(x.grad().item(), 4 * 8.0 + 2 * 2.0);
}

TEST(Backward, NonScalarRootRejected) {
  const auto x = nd::leaf(nd::Tensor::vector({1, 2}));
  EXPECT_THROW(nd::backward(x * 2.0), sir::ArgumentError);
}

TEST(Backward, ConstantsGetNoGradient) {
  const auto x = nd::leaf(nd::Tensor::scalar(2.0));
  const auto c = nd::constant(3.0);
  nd::backward(x * c);
  EXPECT_DOUBLE_EQ(x.grad().item(), 3.0);
  EXPECT_FALSE(c.requires_grad());
}

TEST(Backward, DeterministicBitForBit) {
  auto run = [] {
    sir::Pcg32 rng(9);
    const auto a = nd::leaf(random_tensor(rng, {4, 3}));
    const auto b = nd::leaf(random_tensor(rng, {3, 2}));
    nd::backward(nd::sum(nd::softmax(nd::reshape(nd::matmul(a, b), {8}))));
    return std::pair{a.grad(), b.grad()};
  };
  EXPECT_EQ(run(), run());
}

TEST(EmbeddingMean, AveragesRowsAndHandlesEmpty) {
  const auto table = nd::leaf(nd::Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  const std::vector<std::uint32_t> ids{0, 2, 2};
  const auto m = nd::embedding_mean(table, ids);
  EXPECT_NEAR(m.value()[0], (1 + 5 + 5) / 3.0, 1e-15);
  EXPECT_NEAR(m.value()[1], (2 + 6 + 6) / 3.0, 1e-15);
  nd::backward(nd::sum(m));
  EXPECT_NEAR(table.grad()[4], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(table.grad()[2], 0.0);

  const auto empty = nd::embedding_mean(table, std::vector<std::uint32_t>{});
  EXPECT_EQ(empty.value().data(), (std::vector<double>{0, 0}));
}
