#include <gtest/gtest.h>

#include <cmath>

#include "mcsttm/errors.hpp"
#include "mcsttm/grad_check.hpp"
#include "mcsttm/grad_suite.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/random.hpp"
#include "reference.hpp"

using namespace mcsttm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityLeavesOperand) {
  Tensor i({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(vals(matmul(i, b)), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_EQ(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
  }
}

TEST(Matmul, BatchedMatchesLoop) {
  Rng rng(1);
  Tensor a = uniform_tensor({3, 2, 4}, 1.0, rng);
  Tensor b = uniform_tensor({3, 4, 5}, 1.0, rng);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 2, 5}));
  for (std::size_t i = 0; i < 3; ++i) {
    auto want = ref::matmul(a.data().subspan(i * 8, 8), b.data().subspan(i * 20, 20), 2, 4, 5);
    EXPECT_LT(ref::max_abs_diff(c.data().subspan(i * 10, 10), want), 1e-14);
  }
}

TEST(Matmul, SumGradientIsOnesTimesBTransposed) {
  Rng rng(2);
  Tensor a = uniform_tensor({3, 4}, 1.0, rng, true);
  Tensor b = uniform_tensor({4, 2}, 1.0, rng);
  sum(matmul(a, b)).backward();
  const auto want = ref::matmul(std::vector<double>(6, 1.0), vals(transpose_last2(b)), 3, 2, 4);
  EXPECT_LT(ref::max_abs_diff(a.grad(), want), 1e-14);

  auto report = grad_check([&] { return sum(matmul(a, b)); }, {a, b}, {"a", "b"});
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_rel_error(), 1e-6);
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(vals(add(Tensor({3}, {1, 2, 3}), Tensor({3}, 0.0))), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(vals(elementwise(ElementwiseOp::kMul, Tensor({2}, {2, 3}), 0.5)),
            (std::vector<double>{1, 1.5}));
  EXPECT_THROW(add(Tensor({2, 3}), Tensor({3, 2})), DimensionError);
}

TEST(Elementwise, BroadcastGradientResummed) {
  Tensor a({2, 1}, {1.0, -1.0}, true);
  Tensor b({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(add(a, b)).backward();
  EXPECT_EQ(a.grad(), (std::vector<double>{3, 3}));
  EXPECT_EQ(b.grad(), std::vector<double>(6, 1.0));
  auto report = grad_check([&] { return weighted_reduction(mul(a, b), 3); }, {a, b}, {"a", "b"});
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

TEST(Activation, Examples) {
  EXPECT_EQ(vals(relu(Tensor({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(sigmoid(Tensor({1}, 0.0)).item(), 0.5);
}

TEST(Activation, ReluGradientZeroAtZero) {
  Tensor x({3}, {-1.0, 0.0, 2.0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 0, 1}));
}

TEST(Activation, TanhGradientMatchesClosedFormAndDifferences) {
  Rng rng(3);
  Tensor x = uniform_tensor({10}, 1.0, rng, true);
  sum(tanh(x)).backward();
  for (std::size_t i = 0; i < 10; ++i) {
    const double t = std::tanh(x.data()[i]);
    EXPECT_NEAR(x.grad()[i], 1.0 - t * t, 1e-15);
  }
  auto report = grad_check([&] { return sum(tanh(x)); }, {x}, {"x"});
  EXPECT_LT(report.max_rel_error(), 1e-6);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(vals(softmax_lastdim(Tensor({2}, 0.0))), (std::vector<double>{0.5, 0.5}));
  const auto big = vals(softmax_lastdim(Tensor({2}, {1000.0, 1000.0})));
  EXPECT_EQ(big, (std::vector<double>{0.5, 0.5}));
}

TEST(Softmax, MatchesExtendedPrecision) {
  const auto got = vals(softmax_lastdim(Tensor({3}, {1.0, 2.0, 3.0})));
  long double z = 0.0L;
  for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
  for (int i = 1; i <= 3; ++i) {
    const long double want = std::exp(static_cast<long double>(i)) / z;
    EXPECT_NEAR(got[i - 1], static_cast<double>(want), 1e-15);
  }
}

TEST(Softmax, RowsSumToOneInUnitInterval) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = uniform_tensor({3, 7}, 20.0, rng);
    Tensor y = softmax_lastdim(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = y.data()[r * 7 + c];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, GradCheck) {
  Rng rng(6);
  Tensor x = uniform_tensor({2, 5}, 1.0, rng);
  auto report = grad_check([&] { return weighted_reduction(softmax_lastdim(x), 2); }, {x}, {"x"});
  EXPECT_LT(report.max_rel_error(), 1e-5);
}

TEST(TemporalConv, IdentityAndZeroKernels) {
  Rng rng(7);
  Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
  EXPECT_EQ(vals(temporal_conv(x, Tensor::identity(8), 4, 2)), vals(x));
  for (double v : vals(temporal_conv(x, Tensor({8, 6}, 0.0), 2, 3))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(temporal_conv(x, Tensor({7, 6}), 2, 3), DimensionError);
  EXPECT_THROW(temporal_conv(x, Tensor({8, 6}), 4, 2), DimensionError);
}

TEST(TemporalConv, PerNodeDenseMap) {
  Rng rng(8);
  Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
  Tensor k = uniform_tensor({8, 6}, 1.0, rng);
  Tensor y = temporal_conv(x, k, 2, 3);
  ASSERT_EQ(y.shape(), (Shape{3, 2, 3}));
  for (std::size_t n = 0; n < 3; ++n) {
    auto want = ref::matmul(x.data().subspan(n * 8, 8), k.data(), 1, 8, 6);
    EXPECT_LT(ref::max_abs_diff(y.data().subspan(n * 6, 6), want), 1e-14);
  }
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  Tensor x({3}, {1.0, 2.0, 3.0});
  auto report = grad_check([&] { return add_scalar(scale(sum(x), 0.0), 4.0); }, {x}, {"x"});
  EXPECT_EQ(x.grad(), std::vector<double>(3, 0.0));
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.entries[0].analytic, 0.0);
}

TEST(GradCheck, EveryOperationPassesOnRandomInputs) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto report = check_operations({}, seed);
    for (const auto& e : report.entries) {
      EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error << " seed " << seed;
    }
    EXPECT_GE(report.entries.size(), 20u);
  }
}

TEST(GradCheck, BrokenBackwardRuleIsCaught) {
  for (const char* op : {"matmul", "softmax", "relu", "add", "gather_rows"}) {
    set_backward_fault(op);
    const auto report = check_operations({}, 0);
    set_backward_fault("");
    EXPECT_FALSE(report.passed()) << op;
  }
}

TEST(GradCheck, TightToleranceReportsFailures) {
  GradCheckOptions tight;
  tight.tolerance = 1e-12;
  EXPECT_FALSE(check_operations(tight, 0).passed());
}

TEST(Reshape, PermuteRoundTrip) {
  Rng rng(10);
  Tensor x = uniform_tensor({2, 3, 4}, 1.0, rng);
  Tensor back = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  EXPECT_EQ(vals(back), vals(x));
  EXPECT_THROW(reshape(x, {5, 5}), DimensionError);
}

TEST(GatherRows, PicksAndAccumulates) {
  Tensor table({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor g = gather_rows(table, {2, 0, 2});
  EXPECT_EQ(vals(g), (std::vector<double>{5, 6, 1, 2, 5, 6}));
  sum(g).backward();
  EXPECT_EQ(table.grad(), (std::vector<double>{1, 1, 0, 0, 2, 2}));
}
