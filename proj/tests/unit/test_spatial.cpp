#include <gtest/gtest.h>

#include <numeric>

#include "mcsttm/errors.hpp"
#include "mcsttm/grad_check.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/spatial.hpp"
#include "reference.hpp"

using namespace mcsttm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor row_stochastic(std::size_t m, Rng& rng) {
  Tensor a = uniform_tensor({m, m}, 1.0, rng);
  auto d = a.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += (d[i * m + j] = std::fabs(d[i * m + j]) + 0.01);
    for (std::size_t j = 0; j < m; ++j) d[i * m + j] /= s;
  }
  return a;
}

// P x, with perm[i] the source node of row i.
Tensor permute_nodes(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t block = x.numel() / x.dim(0);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(perm[i] * block), block,
                out.begin() + static_cast<std::ptrdiff_t>(i * block));
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor permute_matrix(const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t m = perm.size();
  std::vector<double> out(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.at({perm[i], perm[j]});
  }
  return Tensor({m, m}, std::move(out));
}

}  // namespace

TEST(Spatial, IdentityComposition) {
  Rng rng(1);
  Tensor x = uniform_tensor({3, 2, 2}, 1.0, rng);
  const Tensor i3 = Tensor::identity(3);
  SpatialParams p{scale(Tensor::identity(2), 1.0 / 3.0), scale(Tensor::identity(2), 1.0 / 3.0),
                  scale(Tensor::identity(2), 1.0 / 3.0)};
  const Tensor y = spatial_forward(x, i3, {i3, i3}, p);
  EXPECT_LT(ref::max_abs_diff(y.data(), x.data()), 1e-15);
}

TEST(Spatial, ZeroWeightsZeroOutput) {
  Rng rng(2);
  Tensor x = uniform_tensor({3, 2, 2}, 1.0, rng);
  const Tensor a = row_stochastic(3, rng);
  SpatialParams p{Tensor({2, 2}), Tensor({2, 2}), Tensor({2, 2})};
  for (double v : vals(spatial_forward(x, a, {a, a}, p))) EXPECT_EQ(v, 0.0);
}

TEST(Spatial, MatchesPerStepLoop) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = uniform_tensor({3, 2, 2}, 1.0, rng);
    const Tensor adp = row_stochastic(3, rng);
    const AdjacencyPair adj{row_stochastic(3, rng), row_stochastic(3, rng)};
    const SpatialParams p = SpatialParams::random(2, rng);
    const auto want = ref::spatial(x.data(), 3, 2, 2, adp.data(), adj.forward.data(),
                                   adj.backward.data(), p.w0.data(), p.w1.data(), p.w2.data());
    EXPECT_LT(ref::max_abs_diff(spatial_forward(x, adp, adj, p).data(), want), 1e-14);

    // Ablated terms drop out of the sum.
    const auto no_adp = ref::spatial(x.data(), 3, 2, 2, {}, adj.forward.data(),
                                     adj.backward.data(), p.w0.data(), p.w1.data(), p.w2.data());
    EXPECT_LT(ref::max_abs_diff(spatial_forward(x, adp, adj, p, {false, true}).data(), no_adp),
              1e-14);
    const auto only_adp = ref::spatial(x.data(), 3, 2, 2, adp.data(), {}, {}, p.w0.data(),
                                       p.w1.data(), p.w2.data());
    EXPECT_LT(ref::max_abs_diff(spatial_forward(x, adp, adj, p, {true, false}).data(), only_adp),
              1e-14);
  }
}

TEST(Spatial, BatchedInputMatchesPerSample) {
  Rng rng(4);
  Tensor x = uniform_tensor({2, 3, 4, 2}, 1.0, rng);
  const Tensor adp = row_stochastic(3, rng);
  const AdjacencyPair adj{row_stochastic(3, rng), row_stochastic(3, rng)};
  const SpatialParams p = SpatialParams::random(2, rng);
  const Tensor y = spatial_forward(x, adp, adj, p);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto want = ref::spatial(x.data().subspan(b * 24, 24), 3, 4, 2, adp.data(),
                                   adj.forward.data(), adj.backward.data(), p.w0.data(),
                                   p.w1.data(), p.w2.data());
    EXPECT_LT(ref::max_abs_diff(y.data().subspan(b * 24, 24), want), 1e-14);
  }
}

TEST(Spatial, LinearInInput) {
  Rng rng(5);
  const Tensor adp = row_stochastic(4, rng);
  const AdjacencyPair adj{row_stochastic(4, rng), row_stochastic(4, rng)};
  const SpatialParams p = SpatialParams::random(3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = uniform_tensor({4, 5, 3}, 1.0, rng);
    Tensor y = uniform_tensor({4, 5, 3}, 1.0, rng);
    const double alpha = -1.7;
    const auto f = [&](const Tensor& v) { return spatial_forward(v, adp, adj, p); };
    EXPECT_LT(ref::max_abs_diff(f(scale(x, alpha)).data(), vals(scale(f(x), alpha))), 1e-10);
    EXPECT_LT(ref::max_abs_diff(f(add(x, y)).data(), vals(add(f(x), f(y)))), 1e-10);
  }
}

TEST(Spatial, NodeRelabelingEquivariance) {
  Rng rng(6);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = uniform_tensor({4, 3, 2}, 1.0, rng);
    const Tensor adp = row_stochastic(4, rng);
    const AdjacencyPair adj{row_stochastic(4, rng), row_stochastic(4, rng)};
    const SpatialParams p = SpatialParams::random(2, rng);
    const Tensor y = spatial_forward(x, adp, adj, p);
    const Tensor yp = spatial_forward(
        permute_nodes(x, perm), permute_matrix(adp, perm),
        {permute_matrix(adj.forward, perm), permute_matrix(adj.backward, perm)}, p);
    EXPECT_LT(ref::max_abs_diff(yp.data(), vals(permute_nodes(y, perm))), 1e-10);
  }
}

TEST(Spatial, GradCheckThroughAdaptiveGraph) {
  Rng rng(7);
  Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
  auto emb = AdaptiveEmbeddings::random(3, 2, rng);
  const AdjacencyPair adj{row_stochastic(3, rng), row_stochastic(3, rng)};
  SpatialParams p = SpatialParams::random(2, rng);
  auto report = grad_check(
      [&] { return weighted_reduction(spatial_forward(x, adaptive_adjacency(emb), adj, p), 3); },
      {p.w0, p.w1, p.w2, emb.e_c, emb.e_r, x}, {"w0", "w1", "w2", "e_c", "e_r", "x"});
  for (const auto& e : report.entries) EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error;
}

TEST(Spatial, ShapeMismatchIsDimensionError) {
  Rng rng(8);
  Tensor x = uniform_tensor({3, 2, 2}, 1.0, rng);
  const Tensor a = row_stochastic(3, rng);
  const Tensor wrong = row_stochastic(4, rng);
  SpatialParams p = SpatialParams::random(2, rng);
  EXPECT_THROW(spatial_forward(x, wrong, {a, a}, p), DimensionError);
  SpatialParams q = SpatialParams::random(3, rng);
  EXPECT_THROW(spatial_forward(x, a, {a, a}, q), DimensionError);
}

TEST(GcnReference, IdentityOnNonnegativeInput) {
  Rng rng(9);
  Tensor x = uniform_tensor({4, 3}, 1.0, rng);
  for (auto& v : x.mutable_data()) v = std::fabs(v);
  const Tensor y = gcn_two_layer_reference(x, Tensor::identity(4), Tensor::identity(3),
                                           Tensor::identity(3));
  EXPECT_EQ(vals(y), vals(x));
  for (double v : vals(gcn_two_layer_reference(Tensor({4, 3}), row_stochastic(4, rng),
                                               uniform_tensor({3, 3}, 1.0, rng),
                                               uniform_tensor({3, 3}, 1.0, rng)))) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(GcnReference, MatchesStraightLine) {
  Rng rng(10);
  Tensor x = uniform_tensor({4, 3}, 1.0, rng);
  const Tensor a = row_stochastic(4, rng);
  const Tensor w0 = uniform_tensor({3, 3}, 1.0, rng);
  const Tensor w1 = uniform_tensor({3, 3}, 1.0, rng);
  auto h = ref::matmul(ref::matmul(a.data(), x.data(), 4, 4, 3), w0.data(), 4, 3, 3);
  for (auto& v : h) v = std::max(v, 0.0);
  auto out = ref::matmul(ref::matmul(a.data(), h, 4, 4, 3), w1.data(), 4, 3, 3);
  for (auto& v : out) v = std::max(v, 0.0);
  EXPECT_LT(ref::max_abs_diff(gcn_two_layer_reference(x, a, w0, w1).data(), out), 1e-14);
  EXPECT_THROW(gcn_two_layer_reference(x, Tensor::identity(3), w0, w1), DimensionError);
}
