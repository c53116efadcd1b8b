/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "hafr/model/hafr.hpp"
#include "hafr/pipeline.hpp"

using hafr::Component;
using hafr::HafrHyper;
using hafr::HafrModel;
using hafr::Variant;
using Vec = hafr::Vector<double>;

namespace {

HafrHyper hyper(int d, int a) {
  HafrHyper h;
  h.embedding_dim = d;
  h.attention_dim = a;
  return h;
}

void zero_all(HafrModel<double>& m) {
  for (auto& g : m.params()) g.value.setZero();
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index j = 0;
  for (double x : xs) v(j++) = x;
  return v;
}

}  // namespace

TEST(MapImage, ZeroWeights) {
  const auto ds = hafr_test::small_dataset(6, 8, 5, 2);
  HafrModel<double> m(ds, hyper(2, 3), Variant::full(), 1);
  zero_all(m);
  const std::vector<float> v{2.0f, 3.0f};
  EXPECT_EQ(m.map_image(v).squaredNorm(), 0.0);
}

TEST(MapImage, IdentityPlusBias) {
  const auto ds = hafr_test::small_dataset(6, 8, 5, 2);
  HafrModel<double> m(ds, hyper(2, 3), Variant::full(), 1);
  m.params().get("W").value.setIdentity();
  m.params().get("b").value.setOnes();
  const std::vector<float> v{2.0f, 3.0f};
  EXPECT_EQ(m.map_image(v), vec({3.0, 4.0}));
}

TEST(MapImage, NanAndLengthErrors) {
  const auto ds = hafr_test::small_dataset(6, 8, 5, 2);
  HafrModel<double> m(ds, hyper(2, 3), Variant::full(), 1);
  const std::vector<float> nan{1.0f, std::numeric_limits<float>::quiet_NaN()};
  EXPECT_THROW(m.map_image(nan), hafr::Error);
  const std::vector<float> three{1.0f, 2.0f, 3.0f};
  EXPECT_THROW(m.map_image(three), hafr::Error);
}

TEST(IngredientAttention, SingleIngredient) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::non_visual(), 2);
  m.params().get("h").value.setRandom();
  const std::vector<hafr::IngredientIndex> ids{3};
  const Vec p = Vec::Random(4);
  const auto [x, alpha] = m.ingredient_attention(p, nullptr, ids);
  EXPECT_EQ(alpha, vec({1.0}));
  EXPECT_EQ(x, m.params().get("X").value.col(3));
}

TEST(IngredientAttention, IdenticalEmbeddingsSplitEvenly) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::non_visual(), 3);
  auto& X = m.params().get("X").value;
  X.col(1) = X.col(0);
  m.params().get("h").value.setRandom();
  const std::vector<hafr::IngredientIndex> ids{0, 1};
  const auto [x, alpha] = m.ingredient_attention(Vec::Random(4), nullptr, ids);
  EXPECT_NEAR(alpha(0), 0.5, 1e-15);
  EXPECT_NEAR(alpha(1), 0.5, 1e-15);
}

TEST(IngredientAttention, ZeroHEqualsAverage) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 4);
  m.params().get("h").value.setZero();
  const std::vector<hafr::IngredientIndex> ids{0, 2, 4};
  const Vec mi = Vec::Random(4);
  const auto [x, alpha] = m.ingredient_attention(Vec::Random(4), &mi, ids);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(alpha(j), 1.0 / 3.0, 1e-15);
  EXPECT_LT((x - m.avg_pool_ingredients(ids)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(IngredientAttention, RiggedLogits) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(2, 1), Variant::non_visual(), 5);
  zero_all(m);
  auto& X = m.params().get("X").value;
  X.col(0) = vec({1.0, 0.0});
  X.col(1) = vec({0.0, 5.0});
  m.params().get("W1x").value << 1.0, 0.0;
  // logits = h tanh(1), h tanh(0) = (ln 2, 0)
  m.params().get("h").value(0, 0) = std::log(2.0) / std::tanh(1.0);
  const std::vector<hafr::IngredientIndex> ids{0, 1};
  const auto [x, alpha] = m.ingredient_attention(vec({0.3, -0.7}), nullptr, ids);
  EXPECT_NEAR(alpha(0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(alpha(1), 1.0 / 3.0, 1e-12);
}

TEST(IngredientAttention, EmptyListThrows) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 6);
  const std::vector<hafr::IngredientIndex> none;
  EXPECT_THROW(m.ingredient_attention(Vec::Zero(4), nullptr, none), hafr::Error);
  EXPECT_THROW(m.avg_pool_ingredients(none), hafr::Error);
}

TEST(AvgPool, Examples) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(2, 3), Variant::avg_avg(), 7);
  auto& X = m.params().get("X").value;
  X.col(0) = vec({1.0, 0.0});
  X.col(1) = vec({0.0, 1.0});
  const std::vector<hafr::IngredientIndex> one{1}, two{0, 1}, same{0, 0, 0};
  EXPECT_EQ(m.avg_pool_ingredients(one), X.col(1));
  EXPECT_EQ(m.avg_pool_ingredients(two), vec({0.5, 0.5}));
  EXPECT_EQ(m.avg_pool_ingredients(same), X.col(0));
}

TEST(ComponentAttention, Examples) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(3, 4), Variant::full(), 8);
  const Vec p = Vec::Random(3);
  m.params().get("v").value.setRandom();
  const Vec c = Vec::Random(3);
  {
    const auto [q, beta] = m.component_attention(p, {{Component::id, c}});
    EXPECT_EQ(beta, vec({1.0}));
    EXPECT_EQ(q, c);
  }
  {
    const auto& Wq = m.params().get("W2q").value;
    m.params().get("W2m").value = Wq;
    m.params().get("W2x").value = Wq;
    const auto [q, beta] = m.component_attention(
        p, {{Component::id, c}, {Component::image, c}, {Component::ingredients, c}});
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(beta(j), 1.0 / 3.0, 1e-15);
  }
  m.params().get("v").value.setZero();
  const auto [q, beta] = m.component_attention(
      p, {{Component::id, Vec::Random(3)}, {Component::image, Vec::Random(3)}});
  EXPECT_EQ(beta, vec({0.5, 0.5}));
  EXPECT_THROW(m.component_attention(p, {}), hafr::Error);
}

TEST(Score, AllZeroParameters) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 9);
  zero_all(m);
  EXPECT_EQ(m.score(0, 0), 0.0);
}

TEST(Score, HandEvaluatedOneDim) {
  const auto ds = hafr_test::small_dataset();
  hafr::Variant id_only{hafr::Aggregation::average, hafr::Aggregation::average,
                        false, false};
  auto h = hyper(1, 1);
  h.output_hidden = 1;
  HafrModel<double> m(ds, h, id_only, 10);
  zero_all(m);
  m.params().get("P").value(0, 2) = 2.0;
  m.params().get("Q").value(0, 5) = 3.0;
  m.params().get("W3").value << 1.0, 1.0, 1.0;
  m.params().get("z").value(0, 0) = 1.0;
  // 2 + 3 + 2*3
  EXPECT_EQ(m.score(2, 5), 11.0);
  EXPECT_EQ(m.score(2, 5), m.score(2, 5));
}

TEST(Score, IndexOutOfRange) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 11);
  EXPECT_THROW(m.score(6, 0), hafr::Error);
  EXPECT_THROW(m.score(0, 8), hafr::Error);
}

TEST(Backward, ZeroLossGradientNoChange) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 12);
  const auto a = m.forward(0, 1);
  const auto b = m.forward(0, 2);
  m.backward(a, b, 0.0);
  for (const auto& g : m.params()) {
    EXPECT_EQ(g.grad.squaredNorm(), 0.0) << g.name;
    EXPECT_FALSE(g.any_touched()) << g.name;
  }
}

TEST(Variants, OnlyUsedGroupsAllocated) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> nv(ds, hyper(4, 3), Variant::non_visual(), 1);
  EXPECT_FALSE(nv.params().contains("W"));
  EXPECT_FALSE(nv.params().contains("W1m"));
  EXPECT_FALSE(nv.params().contains("W2m"));
  HafrModel<double> ni(ds, hyper(4, 3), Variant::non_ingredient(), 1);
  EXPECT_FALSE(ni.params().contains("X"));
  EXPECT_FALSE(ni.params().contains("h"));
  EXPECT_FALSE(ni.params().contains("W2x"));
  HafrModel<double> aa(ds, hyper(4, 3), Variant::avg_avg(), 1);
  EXPECT_FALSE(aa.params().contains("h"));
  EXPECT_FALSE(aa.params().contains("v"));
  HafrModel<double> at(ds, hyper(4, 3), Variant::avg_att(), 1);
  EXPECT_FALSE(at.params().contains("h"));
  EXPECT_TRUE(at.params().contains("v"));
}

TEST(Variants, NamesRoundTrip) {
  for (const auto& name : hafr::hafr_variant_names()) {
    const auto v = Variant::parse(name);
    ASSERT_TRUE(v) << name;
    EXPECT_EQ(v->name(), name);
    EXPECT_EQ(Variant::from_json(v->to_json()), *v);
  }
  EXPECT_FALSE(Variant::parse("nonsense"));
}

TEST(Variants, ZeroLogitsReproduceAveraging) {
  const auto ds = hafr_test::small_dataset();
  HafrModel<double> att(ds, hyper(4, 3), Variant::full(), 13);
  HafrModel<double> avg(ds, hyper(4, 3), Variant::avg_avg(), 13);
  att.params().get("h").value.setZero();
  att.params().get("v").value.setZero();
  for (const auto& name : {"P", "Q", "X", "W", "b", "W3", "b3", "z"}) {
    avg.params().get(name).value = att.params().get(name).value;
  }
  for (hafr::UserIndex u = 0; u < ds.num_users; ++u) {
    for (hafr::RecipeIndex i = 0; i < ds.num_recipes; ++i) {
      EXPECT_NEAR(att.score(u, i), avg.score(u, i), 1e-12);
    }
  }
}

TEST(Softmax, ShiftInvariant) {
  const Vec logits = vec({0.3, -1.2, 2.5, 0.0});
  const Vec a = hafr::detail::stable_softmax<double>(logits);
  const Vec b = hafr::detail::stable_softmax<double>(
      (logits.array() + 700.0).matrix());
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(a.sum(), 1.0, 1e-15);
}

TEST(Scorer, MatchesForwardForEveryVariant) {
  const auto ds = hafr_test::small_dataset(7, 9, 6, 5);
  for (const auto& name : hafr::hafr_variant_names()) {
    HafrModel<double> m(ds, hyper(4, 3), *Variant::parse(name), 14);
    auto rng = hafr::derive_stream(14, "perturb");
    for (auto& g : m.params()) {
      for (Eigen::Index j = 0; j < g.value.size(); ++j) {
        g.value.data()[j] += 0.5 * rng.normal();
      }
    }
    const auto scorer = m.scorer();
    for (hafr::UserIndex u = 0; u < ds.num_users; ++u) {
      auto view = scorer.user(u);
      for (hafr::RecipeIndex i = 0; i < ds.num_recipes; ++i) {
        const double f = m.score(u, i);
        EXPECT_NEAR(view.score(i), f, 1e-12 * std::max(1.0, std::abs(f)))
            << name << " u=" << u << " i=" << i;
      }
    }
  }
}

TEST(Forward, AttentionWeightsFormSimplex) {
  const auto ds = hafr_test::small_dataset(7, 9, 6, 5);
  HafrModel<double> m(ds, hyper(4, 3), Variant::full(), 15);
  auto rng = hafr::derive_stream(15, "perturb");
  for (auto& g : m.params()) {
    for (Eigen::Index j = 0; j < g.value.size(); ++j) {
      g.value.data()[j] = 2.0 * rng.normal();
    }
  }
  for (hafr::UserIndex u = 0; u < ds.num_users; ++u) {
    for (hafr::RecipeIndex i = 0; i < ds.num_recipes; ++i) {
      const auto t = m.forward(u, i);
      EXPECT_NEAR(t.alpha.sum(), 1.0, 1e-12);
      EXPECT_NEAR(t.beta.sum(), 1.0, 1e-12);
      EXPECT_GE(t.alpha.minCoeff(), 0.0);
      EXPECT_GE(t.beta.minCoeff(), 0.0);
      EXPECT_EQ(t.beta.size(), 3);
    }
  }
}

class VariantGradCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(VariantGradCheck, FiniteDifferencesAgree) {
  hafr::TrainConfig tc;
  tc.variant = GetParam();
  tc.embedding_dim = 6;
  tc.attention_dim = 5;
  const auto r = hafr::cmd_gradcheck(tc, {});
  EXPECT_GE(r.result.probes, 200u);
  EXPECT_LT(r.result.max_relative_error, 1e-4)
      << r.result.worst_group << " analytic " << r.result.worst_analytic
      << " numeric " << r.result.worst_numeric;
  EXPECT_TRUE(r.passed);
}

TEST_P(VariantGradCheck, CorruptedGradientFails) {
  hafr::TrainConfig tc;
  tc.variant = GetParam();
  tc.embedding_dim = 6;
  tc.attention_dim = 5;
  hafr::GradCheckOptions opt;
  opt.corrupt_gradient = true;
  EXPECT_FALSE(hafr::cmd_gradcheck(tc, opt).passed);
}

INSTANTIATE_TEST_SUITE_P(
    AllVariants, VariantGradCheck,
    ::testing::ValuesIn(hafr::gradcheck_all_variants()),
    [](const auto& info) {
      std::string s = info.param;
      std::replace(s.begin(), s.end(), '-', '_');
      return s;
    });
