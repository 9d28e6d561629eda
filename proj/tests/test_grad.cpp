#include <gtest/gtest.h>

#include <cmath>

#include "arcl/attnmask.hpp"
#include "arcl/errors.hpp"
#include "arcl/grad.hpp"
#include "arcl/gradcheck.hpp"
#include "arcl/random.hpp"

using namespace arcl;

namespace {

constexpr Projection kAll[] = {Projection::query, Projection::key, Projection::value};

Matrix uniform_image(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(static_cast<std::size_t>(cfg.image_side), static_cast<std::size_t>(cfg.image_side));
  for (double& v : m.values()) v = u(rng);
  return m;
}

struct Fixture {
  ModelParams params;
  Matrix image;
  int label;
  ForwardTrace trace;
  std::vector<double> dlogits;
};

Fixture make_fixture(std::uint64_t seed, const ModelConfig& cfg = tiny_model_config()) {
  Fixture f{random_tiny_model(cfg, seed, 0.5), uniform_image(cfg, seed + 7), static_cast<int>(seed % 3), {}, {}};
  f.trace = forward(f.image, f.params, 0);
  f.dlogits = cross_entropy_grad(f.trace.logits, f.label);
  return f;
}

AttentionMaskSet random_binary_masks(const ModelConfig& cfg, std::uint64_t seed) {
  AttentionMaskSet m = AttentionMaskSet::filled(cfg, 1.0);
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (Tensor3& layer : m.layers)
    for (std::size_t h = 0; h < layer.depth(); ++h) {
      std::vector<double> row(layer.cols());
      for (std::size_t c = 1; c < row.size(); ++c) row[c] = coin(rng) ? 1.0 : 0.0;
      for (std::size_t r = 0; r < layer.rows(); ++r)
        for (std::size_t c = 0; c < row.size(); ++c) layer[h](r, c) = row[c];
    }
  return m;
}

}  // namespace

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  const std::vector<double> z{1.0, 2.0, 0.5};
  const std::vector<double> g = cross_entropy_grad(z, 1);
  const double total = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  EXPECT_NEAR(g[0], std::exp(1.0) / total, 1e-15);
  EXPECT_NEAR(g[1], std::exp(2.0) / total - 1.0, 1e-15);
  EXPECT_NEAR(cross_entropy(z, 1), std::log(total) - 2.0, 1e-14);
  EXPECT_THROW(cross_entropy(z, 3), UsageError);
}

TEST(Backward, OnesMaskGivesBitEqualMaskedGradients) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fixture f = make_fixture(seed);
    const AttentionMaskSet ones = AttentionMaskSet::filled(f.params.config, 1.0);
    // Column 0 of a filled set is forced to 0; a literal all-ones mask is
    // built by hand for the identity check.
    AttentionMaskSet literal = ones;
    for (Tensor3& layer : literal.layers)
      for (std::size_t h = 0; h < layer.depth(); ++h) layer[h] = Matrix(layer.rows(), layer.cols(), 1.0);
    const GradientSet g = backward(f.trace, f.dlogits, f.params, &literal);
    ASSERT_TRUE(g.masked.has_value());
    EXPECT_EQ(*g.masked, g.layers);
    EXPECT_EQ(backward(f.trace, f.dlogits, f.params).layers, g.layers);
  }
}

TEST(Backward, ZerosMaskAnnihilatesProjectionGradients) {
  const Fixture f = make_fixture(3);
  const AttentionMaskSet zeros = AttentionMaskSet::filled(f.params.config, 0.0);
  const GradientSet g = backward(f.trace, f.dlogits, f.params, &zeros);
  for (const ProjectionGrads& layer : *g.masked)
    for (Projection p : kAll)
      for (double v : layer[p].values()) EXPECT_EQ(v, 0.0);
  // Unmasked gradients and the classifier gradient are unaffected.
  EXPECT_EQ(g.layers, backward(f.trace, f.dlogits, f.params).layers);
  EXPECT_GT(frobenius_norm(g.layers[0].w_q), 0.0);
}

TEST(Backward, BinaryMaskIsIdempotent) {
  const Fixture f = make_fixture(4);
  const AttentionMaskSet m = random_binary_masks(f.params.config, 17);
  AttentionMaskSet twice = m;
  for (std::size_t l = 0; l < twice.layers.size(); ++l)
    for (std::size_t h = 0; h < twice.layers[l].depth(); ++h)
      twice.layers[l][h] = hadamard(m.layers[l][h], m.layers[l][h]);
  EXPECT_EQ(*backward(f.trace, f.dlogits, f.params, &m).masked,
            *backward(f.trace, f.dlogits, f.params, &twice).masked);
}

TEST(Backward, MaskShapeMismatchIsDimensionError) {
  const Fixture f = make_fixture(2);
  const AttentionMaskSet wrong = AttentionMaskSet::filled(ModelConfig{}, 1.0);
  EXPECT_THROW(backward(f.trace, f.dlogits, f.params, &wrong), DimensionError);
}

TEST(Backward, TraceWithoutClassifierIsUsageError) {
  const Fixture f = make_fixture(2);
  const ForwardTrace backbone = forward_backbone(f.image, f.params);
  EXPECT_THROW(backward(backbone, f.dlogits, f.params), UsageError);
}

TEST(Backward, LinearInLogitGradient) {
  const Fixture f = make_fixture(5);
  Rng rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> g1(f.dlogits.size()), g2(f.dlogits.size()), mix(f.dlogits.size());
  const double a = 0.7, b = -1.3;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    g1[i] = n(rng);
    g2[i] = n(rng);
    mix[i] = a * g1[i] + b * g2[i];
  }
  const AttentionMaskSet m = random_binary_masks(f.params.config, 5);
  const GradientSet r1 = backward(f.trace, g1, f.params, &m);
  const GradientSet r2 = backward(f.trace, g2, f.params, &m);
  const GradientSet rm = backward(f.trace, mix, f.params, &m);
  for (std::size_t l = 0; l < rm.layers.size(); ++l)
    for (Projection p : kAll) {
      const Matrix expect = add(scale(r1.layers[l][p], a), scale(r2.layers[l][p], b));
      const Matrix expect_masked = add(scale((*r1.masked)[l][p], a), scale((*r2.masked)[l][p], b));
      for (std::size_t i = 0; i < expect.size(); ++i) {
        EXPECT_NEAR(rm.layers[l][p].values()[i], expect.values()[i], 1e-10);
        EXPECT_NEAR((*rm.masked)[l][p].values()[i], expect_masked.values()[i], 1e-10);
      }
    }
}

TEST(Backward, MaskedPositionsContributeNothing) {
  // (dA ⊙ M) K: changing dA where M is zero cannot change the product.
  Rng rng(8);
  Matrix da = gaussian_matrix(5, 5, 1.0, rng);
  const Matrix k = gaussian_matrix(5, 3, 1.0, rng);
  const Matrix m = extend_mask(Matrix{{1, 0}, {0, 1}});
  const Matrix before = matmul(hadamard(da, m), k);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c : {0u, 2u, 3u}) da(r, c) += 10.0 + static_cast<double>(r);
  EXPECT_EQ(matmul(hadamard(da, m), k), before);
}

TEST(Backward, MatchesFiniteDifferencesOnTinyModels) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Fixture f = make_fixture(seed);
    const GradientSet g = backward(f.trace, f.dlogits, f.params);
    for (std::size_t l = 0; l < f.params.blocks.size(); ++l)
      for (Projection p : kAll) {
        const Matrix numeric = finite_diff_oracle(f.image, f.label, f.params, 0, l, p, 1e-5);
        const Matrix& analytic = g.layers[l][p];
        for (std::size_t i = 0; i < numeric.size(); ++i) {
          const double a = analytic.values()[i];
          const double b = numeric.values()[i];
          if (std::abs(b) < 1e-8) {
            EXPECT_LE(std::abs(a - b), 1e-8);
          } else {
            EXPECT_LE(std::abs(a - b) / std::abs(b), 1e-5) << projection_name(p) << " layer " << l;
          }
        }
      }
  }
}

TEST(Backward, ClassifierGradientMatchesFiniteDifferences) {
  const Fixture f = make_fixture(6);
  const GradientSet g = backward(f.trace, f.dlogits, f.params);
  const Matrix numeric = central_difference(
      [&](const Matrix& w) {
        ModelParams p = f.params;
        p.classifiers[0].weight = w;
        return sample_loss(f.image, f.label, p, 0);
      },
      f.params.classifiers[0].weight, 1e-6);
  for (std::size_t i = 0; i < numeric.size(); ++i)
    EXPECT_NEAR(g.classifier_weight.values()[i], numeric.values()[i], 1e-8);
}

TEST(FiniteDifference, QuadraticToy) {
  const Matrix d = central_difference([](const Matrix& w) { return w(0, 0) * w(0, 0); }, Matrix{{3.0}}, 1e-4);
  EXPECT_NEAR(d(0, 0), 6.0, 1e-6);
}

TEST(FiniteDifference, SaturatedSoftmaxGivesZeroGradient) {
  Fixture f = make_fixture(2);
  f.params.classifiers[0].bias(0, static_cast<std::size_t>(f.label)) = 60.0;
  const Matrix numeric = finite_diff_oracle(f.image, f.label, f.params, 0, 1, Projection::query, 1e-5);
  for (double v : numeric.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(GradCheck, SuitePassesAndNegativeControlFails) {
  GradCheckOptions opts;
  const GradCheckReport ok = run_gradcheck(opts);
  EXPECT_TRUE(ok.passed);
  EXPECT_LE(ok.max_relative_error, 1e-5);
  EXPECT_EQ(ok.worst_per_layer.size(), 2u);
  opts.corrupt = true;
  opts.models = 2;
  EXPECT_FALSE(run_gradcheck(opts).passed);
}
