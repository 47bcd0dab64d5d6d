#include <gtest/gtest.h>

#include "mcsttm/errors.hpp"
#include "mcsttm/grad_check.hpp"
#include "mcsttm/grad_suite.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/temporal.hpp"
#include "reference.hpp"

using namespace mcsttm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(PositionEncode, ZeroCodebookIsIdentity) {
  Rng rng(1);
  Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
  EXPECT_EQ(vals(position_encode(x, {5, 6, 7, 8}, PositionCodebook::zeros(12, 2))), vals(x));
}

TEST(PositionEncode, SingleStepAtZero) {
  Rng rng(2);
  const auto book = PositionCodebook::random(288, 3, rng);
  Tensor x({2, 1, 3}, 0.0);
  const Tensor y = position_encode(x, {0}, book);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(y.at({n, 0, c}), book.tod.at({0, c}) + book.dow.at({0, c}));
    }
  }
}

TEST(PositionEncode, SlotArithmetic) {
  EXPECT_EQ(tod_slot(288 + 3, 288), 3u);
  EXPECT_EQ(dow_slot(288 + 3, 288), 1u);
  EXPECT_EQ(dow_slot(7 * 288 + 5, 288), 0u);
  Rng rng(3);
  const auto book = PositionCodebook::random(288, 2, rng);
  const Tensor y = position_encode(Tensor({1, 1, 2}, 0.0), {288 + 3}, book);
  EXPECT_EQ(y.at({0, 0, 1}), book.tod.at({3, 1}) + book.dow.at({1, 1}));
}

TEST(PositionEncode, MatchesTableLookupAndBatches) {
  Rng rng(4);
  const auto book = PositionCodebook::random(12, 3, rng);
  Tensor x = uniform_tensor({2, 4, 5, 3}, 1.0, rng);
  std::vector<std::int64_t> idx;
  for (int i = 0; i < 10; ++i) idx.push_back(7 * i * i + 3);
  const Tensor y = position_encode(x, idx, book);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::vector<std::int64_t> part(idx.begin() + static_cast<long>(b * 5),
                                         idx.begin() + static_cast<long>(b * 5 + 5));
    const auto want = ref::position_encode(x.data().subspan(b * 60, 60), 4, 5, 3, part,
                                           book.tod.data(), book.dow.data(), 12);
    EXPECT_LT(ref::max_abs_diff(y.data().subspan(b * 60, 60), want), 1e-15);
  }
}

TEST(Qkv, IdentityQueryIsInput) {
  Rng rng(5);
  Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
  auto p = AttentionParams::zeros(2, 8, 1);
  p.w_q = Tensor::identity(2);
  const auto qkv = qkv_project(x, p);
  ASSERT_EQ(qkv.q.shape(), (Shape{3, 1, 4, 2}));
  EXPECT_EQ(vals(qkv.q), vals(x));
}

TEST(Qkv, ZeroInputZeroProjections) {
  Rng rng(6);
  const auto p = AttentionParams::random(4, 8, 2, rng);
  const auto qkv = qkv_project(Tensor({3, 4, 4}, 0.0), p);
  for (const Tensor* t : {&qkv.q, &qkv.k, &qkv.v}) {
    for (double v : t->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Qkv, HeadSlicesConcatenateToProjection) {
  Rng rng(7);
  Tensor x = uniform_tensor({3, 5, 4}, 1.0, rng);
  const auto p = AttentionParams::random(4, 8, 2, rng);
  const auto qkv = qkv_project(x, p);
  EXPECT_EQ(vals(merge_heads(qkv.q)), vals(matmul(x, p.w_q)));
  // Head h holds feature columns [2h, 2h+2).
  const Tensor full = matmul(x, p.w_k);
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t c = 0; c < 2; ++c) {
          EXPECT_EQ(qkv.k.at({n, h, t, c}), full.at({n, t, 2 * h + c}));
        }
      }
    }
  }
}

TEST(Qkv, IndivisibleHeadsIsConfigError) {
  Rng rng(8);
  EXPECT_THROW(AttentionParams::random(6, 8, 4, rng), ConfigError);
  auto p = AttentionParams::zeros(4, 8, 2);
  p.heads = 3;
  EXPECT_THROW(qkv_project(Tensor({2, 3, 4}), p), ConfigError);
}

TEST(Attention, ZeroQueryKeyUniform) {
  const Tensor s = attention_scores(Tensor({2, 2, 5, 2}), Tensor({2, 2, 5, 2}), 4);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Attention, SingleStepScoresAreOne) {
  Rng rng(9);
  const Tensor s = attention_scores(uniform_tensor({3, 2, 1, 2}, 1.0, rng),
                                    uniform_tensor({3, 2, 1, 2}, 1.0, rng), 4);
  for (double v : s.data()) EXPECT_EQ(v, 1.0);
}

TEST(Attention, MatchesStraightLine) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = uniform_tensor({3, 4, 4}, 1.0, rng);
    const auto p = AttentionParams::random(4, 8, 2, rng);
    const auto qkv = qkv_project(x, p);
    const auto want = ref::attention(x.data(), 3, 4, 4, p.w_q.data(), p.w_k.data(),
                                     p.w_v.data(), 2);
    EXPECT_LT(ref::max_abs_diff(attention_scores(qkv.q, qkv.k, 4).data(), want.scores), 1e-15);
  }
}

TEST(Attention, KeyPermutationPermutesColumns) {
  Rng rng(11);
  Tensor q = uniform_tensor({2, 1, 4, 3}, 1.0, rng);
  Tensor k = uniform_tensor({2, 1, 4, 3}, 1.0, rng);
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  std::vector<double> kp(k.numel());
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t c = 0; c < 3; ++c) kp[(n * 4 + t) * 3 + c] = k.at({n, 0, perm[t], c});
    }
  }
  const Tensor s = attention_scores(q, k, 3);
  const Tensor sp = attention_scores(q, Tensor(k.shape(), kp), 3);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t a = 0; a < 4; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_NEAR(sp.at({n, 0, a, b}), s.at({n, 0, a, perm[b]}), 1e-15);
        row += s.at({n, 0, a, b});
      }
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

TEST(TemporalForward, ZeroParametersIsIdentity) {
  Rng rng(12);
  Tensor x = uniform_tensor({3, 4, 4}, 1.0, rng);
  EXPECT_EQ(vals(temporal_forward(x, AttentionParams::zeros(4, 16, 2))), vals(x));
}

TEST(TemporalForward, SingleStepDoubles) {
  Rng rng(13);
  Tensor x = uniform_tensor({3, 1, 2}, 1.0, rng);
  auto p = AttentionParams::zeros(2, 8, 1);
  p.w_v = Tensor::identity(2);
  EXPECT_EQ(vals(temporal_forward(x, p)), vals(scale(x, 2.0)));
}

TEST(TemporalForward, MatchesStraightLine) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = uniform_tensor({3, 4, 4}, 1.0, rng);
    const auto p = AttentionParams::random(4, 6, 2, rng);
    const auto want = ref::temporal(x.data(), 3, 4, 4, p.w_q.data(), p.w_k.data(), p.w_v.data(),
                                    2, p.ff_w0.data(), p.ff_w1.data(), p.ff_w2.data(), 6);
    EXPECT_LT(ref::max_abs_diff(temporal_forward(x, p).data(), want), 1e-14);
  }
}

TEST(TemporalForward, NodePermutationInvariance) {
  Rng rng(15);
  Tensor x = uniform_tensor({3, 4, 4}, 1.0, rng);
  const auto p = AttentionParams::random(4, 8, 2, rng);
  const Tensor y = temporal_forward(x, p);
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<double> xp(x.numel());
  for (std::size_t i = 0; i < 3; ++i) {
    std::copy_n(x.data().begin() + static_cast<long>(perm[i] * 16), 16,
                xp.begin() + static_cast<long>(i * 16));
  }
  const Tensor yp = temporal_forward(Tensor(x.shape(), xp), p);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(ref::max_abs_diff(yp.data().subspan(i * 16, 16), y.data().subspan(perm[i] * 16, 16)),
              1e-15);
  }
}

TEST(TemporalForward, GradCheckIncludingPositionTables) {
  Rng rng(16);
  Tensor x = uniform_tensor({3, 4, 4}, 1.0, rng);
  auto p = AttentionParams::random(4, 8, 2, rng);
  auto book = PositionCodebook::random(6, 4, rng);
  const std::vector<std::int64_t> idx{4, 5, 6, 7};
  auto report = grad_check(
      [&] { return weighted_reduction(temporal_forward(position_encode(x, idx, book), p), 9); },
      {p.w_q, p.w_k, p.w_v, p.ff_w0, p.ff_w1, p.ff_w2, book.tod, book.dow, x},
      {"w_q", "w_k", "w_v", "ff_w0", "ff_w1", "ff_w2", "tod", "dow", "x"});
  for (const auto& e : report.entries) EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error;
}

TEST(StBlock, GradCheckEveryParameter) {
  const auto report = check_st_block();
  for (const auto& e : report.entries) EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error;
}
