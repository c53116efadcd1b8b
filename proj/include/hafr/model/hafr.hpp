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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hafr/dataset.hpp"
#include "hafr/numeric.hpp"
#include "json.hpp"

namespace hafr {

enum class Aggregation : std::uint8_t { average, attention };

// Which recipe components feed the fused representation, and how each
// level aggregates. The recipe-id component is always present.
struct Variant {
  Aggregation ingredient_agg = Aggregation::attention;
  Aggregation component_agg = Aggregation::attention;
  bool use_image = true;
  bool use_ingredients = true;

  static Variant full() { return {}; }
  static Variant non_visual() {
    Variant v;
    v.use_image = false;
    return v;
  }
  static Variant non_ingredient() {
    Variant v;
    v.use_ingredients = false;
    return v;
  }
  static Variant avg_avg() {
    return {Aggregation::average, Aggregation::average, true, true};
  }
  static Variant avg_att() {
    return {Aggregation::average, Aggregation::attention, true, true};
  }

  bool ingredient_attention() const {
    return use_ingredients && ingredient_agg == Aggregation::attention;
  }
  bool component_attention() const {
    return component_agg == Aggregation::attention;
  }

  std::string name() const {
    if (*this == full()) return "hafr";
    if (*this == non_visual()) return "hafr-non-v";
    if (*this == non_ingredient()) return "hafr-non-i";
    if (*this == avg_avg()) return "avg-avg";
    if (*this == avg_att()) return "avg-att";
    auto agg = [](Aggregation a) { return a == Aggregation::attention ? "att" : "avg"; };
    return std::string("ingre=") + agg(ingredient_agg) +
           ",comp=" + agg(component_agg) + ",image=" + (use_image ? "1" : "0") +
           ",ingredients=" + (use_ingredients ? "1" : "0");
  }

  static std::optional<Variant> parse(std::string_view s) {
    if (s == "hafr" || s == "att-att") return full();
    if (s == "hafr-non-v") return non_visual();
    if (s == "hafr-non-i") return non_ingredient();
    if (s == "avg-avg") return avg_avg();
    if (s == "avg-att") return avg_att();
    if (s == "att-avg") {
      return Variant{Aggregation::attention, Aggregation::average, true, true};
    }
    return std::nullopt;
  }

  nlohmann::ordered_json to_json() const {
    auto agg = [](Aggregation a) { return a == Aggregation::attention ? "attention" : "average"; };
    return {{"ingredient_agg", agg(ingredient_agg)},
            {"component_agg", agg(component_agg)},
            {"use_image", use_image},
            {"use_ingredients", use_ingredients}};
  }

  static Variant from_json(const nlohmann::json& j) {
    auto agg = [](const std::string& s) {
      if (s == "attention") return Aggregation::attention;
      if (s == "average") return Aggregation::average;
      throw Error("unknown aggregation '" + s + "'");
    };
    return {agg(j.at("ingredient_agg").get<std::string>()),
            agg(j.at("component_agg").get<std::string>()),
            j.at("use_image").get<bool>(), j.at("use_ingredients").get<bool>()};
  }

  friend bool operator==(const Variant&, const Variant&) = default;
};

// Sizes and per-group L2 coefficients. The attention hidden size is shared by
// both attention levels; output_hidden = 0 means "same as embedding_dim".
struct HafrHyper {
  int embedding_dim = 64;
  int attention_dim = 128;
  int output_hidden = 0;
  double lambda_embed = 0.1;
  double lambda_image = 0.01;
  double lambda_mlp = 1.0;

  int hidden() const { return output_hidden > 0 ? output_hidden : embedding_dim; }
};

enum class Component : std::uint8_t { id, image, ingredients };

inline const char* component_name(Component c) {
  switch (c) {
    case Component::id: return "id";
    case Component::image: return "image";
    case Component::ingredients: return "ingredients";
  }
  return "?";
}

// Everything the backward pass needs, plus the attention weights for
// inspection.
template <typename Real>
struct HafrTrace {
  using Vec = Vector<Real>;
  using Mat = Matrix<Real>;

  UserIndex user = 0;
  RecipeIndex recipe = 0;
  Vec p;
  Vec q;
  Vec m;                                 // empty without the image path
  std::vector<IngredientIndex> ingredients;
  Mat ingredient_embeddings;             // D x J
  Mat ingredient_hidden;                 // D1 x J tanh activations
  Vec alpha;                             // J
  Vec x_pooled;                          // D
  std::vector<Component> components;
  Mat component_values;                  // D x C
  Mat component_hidden;                  // D2 x C tanh activations
  Vec beta;                              // C
  Vec q_fused;                           // D
  Vec mlp_input;                         // 3D
  Vec hidden_pre;                        // H
  Vec hidden;                            // H
  Real score = 0;
};

namespace detail {

template <typename Real>
Vector<Real> stable_softmax(const Vector<Real>& logits) {
  const Real mx = logits.maxCoeff();
  Vector<Real> w = (logits.array() - mx).exp().matrix();
  return w / w.sum();
}

template <typename Vec>
void require_finite(const Vec& v, const char* layer) {
  if (!v.allFinite()) {
    throw NumericError(std::string("non-finite values in ") + layer);
  }
}

}  // namespace detail

template <typename Real>
class HafrScorer;

template <typename Real = double>
class HafrModel {
 public:
  using real_type = Real;
  using Vec = Vector<Real>;
  using Mat = Matrix<Real>;
  using Trace = HafrTrace<Real>;
  using GroupId = typename ParamStore<Real>::GroupId;

  static constexpr std::string_view kind() { return "hafr"; }

  // Only the groups the variant reads are allocated.
  HafrModel(const Dataset& data, HafrHyper hyper, Variant variant,
            std::uint64_t seed)
      : data_(&data), hyper_(hyper), variant_(variant), params_(seed) {
    if (hyper.embedding_dim < 1 || hyper.attention_dim < 1 ||
        hyper.output_hidden < 0) {
      throw Error("hafr: dimensions must be positive");
    }
    const Eigen::Index D = hyper.embedding_dim;
    const Eigen::Index A = hyper.attention_dim;
    const Eigen::Index H = hyper.hidden();
    const auto embed = static_cast<Real>(hyper.lambda_embed);
    const auto image = static_cast<Real>(hyper.lambda_image);
    const auto mlp = static_cast<Real>(hyper.lambda_mlp);
    const auto M = static_cast<Eigen::Index>(data.num_users);
    const auto N = static_cast<Eigen::Index>(data.num_recipes);
    const auto K = static_cast<Eigen::Index>(data.num_ingredients);
    const auto F = static_cast<Eigen::Index>(data.feature_dim);
    const auto emb = Init::gaussian(0.01);
    const auto xav = Init::xavier();
    const auto zero = Init::zeros();

    P_ = params_.add("P", D, M, emb, embed, Layout::columns);
    Q_ = params_.add("Q", D, N, emb, embed, Layout::columns);
    if (variant.use_ingredients) {
      X_ = params_.add("X", D, K, emb, embed, Layout::columns);
    }
    if (variant.use_image) {
      if (F < 1) {
        throw Error("hafr: image path requires feature_dim >= 1");
      }
      W_ = params_.add("W", D, F, xav, image);
      b_ = params_.add("b", D, 1, zero, image);
    }
    if (variant.ingredient_attention()) {
      W1p_ = params_.add("W1p", A, D, xav, mlp);
      if (variant.use_image) {
        W1m_ = params_.add("W1m", A, D, xav, mlp);
      }
      W1x_ = params_.add("W1x", A, D, xav, mlp);
      b1_ = params_.add("b1", A, 1, zero, mlp);
      h_ = params_.add("h", A, 1, zero, mlp);
    }
    if (variant.component_attention()) {
      W2p_ = params_.add("W2p", A, D, xav, mlp);
      W2_[0] = params_.add("W2q", A, D, xav, mlp);
      if (variant.use_image) {
        W2_[1] = params_.add("W2m", A, D, xav, mlp);
      }
      if (variant.use_ingredients) {
        W2_[2] = params_.add("W2x", A, D, xav, mlp);
      }
      b2_ = params_.add("b2", A, 1, zero, mlp);
      v_ = params_.add("v", A, 1, zero, mlp);
    }
    W3_ = params_.add("W3", H, 3 * D, xav, mlp);
    b3_ = params_.add("b3", H, 1, zero, mlp);
    z_ = params_.add("z", H, 1, Init::gaussian(0.01), mlp);
  }

  const Dataset& data() const { return *data_; }
  void rebind(const Dataset& data) { data_ = &data; }
  const HafrHyper& hyper() const { return hyper_; }
  const Variant& variant() const { return variant_; }
  std::string variant_name() const { return variant_.name(); }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  nlohmann::ordered_json descriptor() const {
    return {{"kind", std::string(kind())},
            {"variant", variant_.to_json()},
            {"embedding_dim", hyper_.embedding_dim},
            {"attention_dim", hyper_.attention_dim},
            {"output_hidden", hyper_.hidden()},
            {"lambda_embed", hyper_.lambda_embed},
            {"lambda_image", hyper_.lambda_image},
            {"lambda_mlp", hyper_.lambda_mlp}};
  }

  // m_i = W v_i + b
  Vec map_image(std::span<const float> v) const {
    if (!W_) {
      throw Error("hafr: variant has no image path");
    }
    const auto& W = params_[*W_].value;
    if (static_cast<Eigen::Index>(v.size()) != W.cols()) {
      throw Error("map_image: feature length " + std::to_string(v.size()) +
                  " != " + std::to_string(W.cols()));
    }
    const Vec x = Eigen::Map<const Eigen::VectorXf>(
                      v.data(), static_cast<Eigen::Index>(v.size()))
                      .template cast<Real>();
    detail::require_finite(x, "image features");
    return W * x + params_[*b_].value.col(0);
  }

  // Unweighted mean of the listed ingredient embeddings.
  Vec avg_pool_ingredients(std::span<const IngredientIndex> ids) const {
    if (ids.empty()) {
      throw Error("avg_pool_ingredients: empty ingredient list");
    }
    const auto& X = params_[require(X_, "X")].value;
    Vec out = Vec::Zero(X.rows());
    for (auto k : ids) {
      out += X.col(k);
    }
    return out / static_cast<Real>(ids.size());
  }

  // User-conditioned softmax over ingredients. `m` may be null when the
  // variant has no image path. Returns (pooled embedding, weights).
  std::pair<Vec, Vec> ingredient_attention(
      const Vec& p, const Vec* m, std::span<const IngredientIndex> ids) const {
    Trace t;
    t.p = p;
    if (m) {
      t.m = *m;
    }
    attend_ingredients(t, ids);
    return {t.x_pooled, t.alpha};
  }

  // Softmax (or uniform) fusion of the ordered components.
  std::pair<Vec, Vec> component_attention(
      const Vec& p, const std::vector<std::pair<Component, Vec>>& comps) const {
    if (comps.empty()) {
      throw Error("component_attention: no components");
    }
    Trace t;
    t.p = p;
    t.component_values.resize(p.size(), static_cast<Eigen::Index>(comps.size()));
    for (std::size_t c = 0; c < comps.size(); ++c) {
      t.components.push_back(comps[c].first);
      t.component_values.col(static_cast<Eigen::Index>(c)) = comps[c].second;
    }
    fuse_components(t);
    return {t.q_fused, t.beta};
  }

  Trace forward(UserIndex u, RecipeIndex i) const {
    if (u >= data_->num_users || i >= data_->num_recipes) {
      throw Error("hafr: index out of range (user " + std::to_string(u) +
                  ", recipe " + std::to_string(i) + ")");
    }
    Trace t;
    t.user = u;
    t.recipe = i;
    t.p = params_[P_].value.col(u);
    t.q = params_[Q_].value.col(i);
    if (variant_.use_image) {
      t.m = map_image(data_->feature_row(i));
    }
    const Eigen::Index D = t.p.size();

    t.components.push_back(Component::id);
    if (variant_.use_image) {
      t.components.push_back(Component::image);
    }
    if (variant_.use_ingredients) {
      const auto& ids = data_->ingredients[i];
      if (variant_.ingredient_attention()) {
        attend_ingredients(t, ids);
      } else {
        gather_ingredients(t, ids);
        const auto J = static_cast<Eigen::Index>(ids.size());
        t.alpha = Vec::Constant(J, Real(1) / static_cast<Real>(J));
        t.x_pooled = t.ingredient_embeddings * t.alpha;
      }
      t.components.push_back(Component::ingredients);
    }
    const auto C = static_cast<Eigen::Index>(t.components.size());
    t.component_values.resize(D, C);
    for (Eigen::Index c = 0; c < C; ++c) {
      switch (t.components[static_cast<std::size_t>(c)]) {
        case Component::id: t.component_values.col(c) = t.q; break;
        case Component::image: t.component_values.col(c) = t.m; break;
        case Component::ingredients: t.component_values.col(c) = t.x_pooled; break;
      }
    }
    fuse_components(t);

    // ŷ = zᵀ ReLU(W3 [p; q̃; p ⊙ q̃] + b3)
    t.mlp_input.resize(3 * D);
    t.mlp_input << t.p, t.q_fused, t.p.cwiseProduct(t.q_fused);
    t.hidden_pre = params_[W3_].value * t.mlp_input + params_[b3_].value.col(0);
    t.hidden = t.hidden_pre.cwiseMax(Real(0));
    t.score = params_[z_].value.col(0).dot(t.hidden);
    if (!std::isfinite(static_cast<double>(t.score))) {
      throw NumericError("non-finite score for user " + std::to_string(u) +
                         ", recipe " + std::to_string(i));
    }
    return t;
  }

  Real score(UserIndex u, RecipeIndex i) const { return forward(u, i).score; }

  // Read-only scorer with user-independent terms hoisted out; for ranking
  // many recipes per user.
  HafrScorer<Real> scorer() const { return HafrScorer<Real>(*this); }

  // Accumulates d(score)/dθ · dscore into the gradient buffers and marks the
  // touched columns.
  void backward(const Trace& t, Real dscore) {
    if (dscore == Real(0)) {
      return;
    }
    const Eigen::Index D = t.p.size();

    // Output layer.
    auto& z = params_[z_];
    auto& W3 = params_[W3_];
    auto& b3 = params_[b3_];
    z.grad.col(0) += dscore * t.hidden;
    const Vec dpre = (dscore * z.value.col(0).array() *
                      (t.hidden_pre.array() > Real(0)).template cast<Real>())
                         .matrix();
    W3.grad.noalias() += dpre * t.mlp_input.transpose();
    b3.grad.col(0) += dpre;
    z.touch(0);
    W3.touch(0);
    b3.touch(0);
    const Vec dinput = W3.value.transpose() * dpre;
    Vec dp = dinput.head(D) + dinput.tail(D).cwiseProduct(t.q_fused);
    const Vec dq_fused =
        dinput.segment(D, D) + dinput.tail(D).cwiseProduct(t.p);
    detail::require_finite(dq_fused, "output layer");

    // Component level.
    const auto C = t.component_values.cols();
    Mat dcomp = dq_fused * t.beta.transpose();
    if (variant_.component_attention()) {
      const Vec dbeta = t.component_values.transpose() * dq_fused;
      const Vec dlogit =
          t.beta.cwiseProduct((dbeta.array() - t.beta.dot(dbeta)).matrix());
      auto& v = params_[*v_];
      v.grad.col(0) += t.component_hidden * dlogit;
      v.touch(0);
      const Mat dpre2 =
          (v.value.col(0) * dlogit.transpose()).cwiseProduct(
              (Real(1) - t.component_hidden.array().square()).matrix());
      for (Eigen::Index c = 0; c < C; ++c) {
        auto& W2c = params_[*W2_[slot(t.components[static_cast<std::size_t>(c)])]];
        W2c.grad.noalias() += dpre2.col(c) * t.component_values.col(c).transpose();
        dcomp.col(c).noalias() += W2c.value.transpose() * dpre2.col(c);
        W2c.touch(0);
      }
      const Vec s2 = dpre2.rowwise().sum();
      auto& W2p = params_[*W2p_];
      auto& b2 = params_[*b2_];
      W2p.grad.noalias() += s2 * t.p.transpose();
      dp.noalias() += W2p.value.transpose() * s2;
      b2.grad.col(0) += s2;
      W2p.touch(0);
      b2.touch(0);
      detail::require_finite(dcomp, "component attention");
    }

    Vec dm;
    if (variant_.use_image) {
      dm = Vec::Zero(D);
    }
    for (Eigen::Index c = 0; c < C; ++c) {
      switch (t.components[static_cast<std::size_t>(c)]) {
        case Component::id: {
          auto& Q = params_[Q_];
          Q.grad.col(t.recipe) += dcomp.col(c);
          Q.touch(t.recipe);
          break;
        }
        case Component::image:
          dm += dcomp.col(c);
          break;
        case Component::ingredients:
          backward_ingredients(t, dcomp.col(c), dp, dm);
          break;
      }
    }

    if (variant_.use_image) {
      auto& W = params_[*W_];
      auto& b = params_[*b_];
      const auto v = data_->feature_row(t.recipe);
      const Vec x = Eigen::Map<const Eigen::VectorXf>(
                        v.data(), static_cast<Eigen::Index>(v.size()))
                        .template cast<Real>();
      W.grad.noalias() += dm * x.transpose();
      b.grad.col(0) += dm;
      W.touch(0);
      b.touch(0);
    }

    detail::require_finite(dp, "user embedding");
    auto& P = params_[P_];
    P.grad.col(t.user) += dp;
    P.touch(t.user);
  }

  // Pairwise form: the loss gradient w.r.t. (ŷ_ui − ŷ_uk).
  void backward(const Trace& pos, const Trace& neg, Real loss_grad) {
    backward(pos, loss_grad);
    backward(neg, -loss_grad);
  }

 private:
  friend class HafrScorer<Real>;

  static std::size_t slot(Component c) { return static_cast<std::size_t>(c); }

  GroupId require(const std::optional<GroupId>& id, const char* name) const {
    if (!id) {
      throw Error(std::string("hafr: variant has no parameter group ") + name);
    }
    return *id;
  }

  void gather_ingredients(Trace& t, std::span<const IngredientIndex> ids) const {
    if (ids.empty()) {
      throw Error("ingredient pooling: empty ingredient list");
    }
    const auto& X = params_[require(X_, "X")].value;
    t.ingredients.assign(ids.begin(), ids.end());
    t.ingredient_embeddings.resize(X.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      t.ingredient_embeddings.col(static_cast<Eigen::Index>(j)) = X.col(ids[j]);
    }
  }

  // a_k = hᵀ tanh(W1p p + W1m m + W1x x_k + b1); α = softmax(a); x̃ = Σ α_k x_k
  void attend_ingredients(Trace& t, std::span<const IngredientIndex> ids) const {
    gather_ingredients(t, ids);
    if (!W1p_) {
      throw Error("hafr: variant has no ingredient attention");
    }
    Vec base = params_[*W1p_].value * t.p + params_[*b1_].value.col(0);
    if (W1m_ && t.m.size() > 0) {
      base.noalias() += params_[*W1m_].value * t.m;
    }
    t.ingredient_hidden = params_[*W1x_].value * t.ingredient_embeddings;
    t.ingredient_hidden.colwise() += base;
    t.ingredient_hidden = t.ingredient_hidden.array().tanh().matrix();
    const Vec logits = t.ingredient_hidden.transpose() * params_[*h_].value.col(0);
    t.alpha = detail::stable_softmax<Real>(logits);
    t.x_pooled = t.ingredient_embeddings * t.alpha;
  }

  // b_ρ = vᵀ tanh(W2p p + W2ρ c_ρ + b2); β = softmax(b); q̃ = Σ β_ρ c_ρ
  void fuse_components(Trace& t) const {
    const auto C = t.component_values.cols();
    if (variant_.component_attention()) {
      const Vec base = params_[*W2p_].value * t.p + params_[*b2_].value.col(0);
      t.component_hidden.resize(base.size(), C);
      for (Eigen::Index c = 0; c < C; ++c) {
        const auto& W2c =
            params_[*W2_[slot(t.components[static_cast<std::size_t>(c)])]].value;
        t.component_hidden.col(c) = base + W2c * t.component_values.col(c);
      }
      t.component_hidden = t.component_hidden.array().tanh().matrix();
      const Vec logits = t.component_hidden.transpose() * params_[*v_].value.col(0);
      t.beta = detail::stable_softmax<Real>(logits);
    } else {
      t.beta = Vec::Constant(C, Real(1) / static_cast<Real>(C));
    }
    t.q_fused = t.component_values * t.beta;
  }

  void backward_ingredients(const Trace& t, const Vec& dx_pooled, Vec& dp,
                            Vec& dm) {
    auto& X = params_[*X_];
    Mat dxs = dx_pooled * t.alpha.transpose();
    if (variant_.ingredient_attention()) {
      const Vec dalpha = t.ingredient_embeddings.transpose() * dx_pooled;
      const Vec dlogit =
          t.alpha.cwiseProduct((dalpha.array() - t.alpha.dot(dalpha)).matrix());
      auto& h = params_[*h_];
      h.grad.col(0) += t.ingredient_hidden * dlogit;
      h.touch(0);
      const Mat dpre =
          (h.value.col(0) * dlogit.transpose()).cwiseProduct(
              (Real(1) - t.ingredient_hidden.array().square()).matrix());
      auto& W1x = params_[*W1x_];
      W1x.grad.noalias() += dpre * t.ingredient_embeddings.transpose();
      dxs.noalias() += W1x.value.transpose() * dpre;
      W1x.touch(0);
      const Vec s = dpre.rowwise().sum();
      auto& W1p = params_[*W1p_];
      auto& b1 = params_[*b1_];
      W1p.grad.noalias() += s * t.p.transpose();
      dp.noalias() += W1p.value.transpose() * s;
      b1.grad.col(0) += s;
      W1p.touch(0);
      b1.touch(0);
      if (W1m_) {
        auto& W1m = params_[*W1m_];
        W1m.grad.noalias() += s * t.m.transpose();
        dm.noalias() += W1m.value.transpose() * s;
        W1m.touch(0);
      }
      detail::require_finite(dxs, "ingredient attention");
    }
    for (std::size_t j = 0; j < t.ingredients.size(); ++j) {
      X.grad.col(t.ingredients[j]) += dxs.col(static_cast<Eigen::Index>(j));
      X.touch(t.ingredients[j]);
    }
  }

  const Dataset* data_;
  HafrHyper hyper_;
  Variant variant_;
  ParamStore<Real> params_;

  GroupId P_ = 0, Q_ = 0, W3_ = 0, b3_ = 0, z_ = 0;
  std::optional<GroupId> X_, W_, b_;
  std::optional<GroupId> W1p_, W1m_, W1x_, b1_, h_;
  std::optional<GroupId> W2p_, b2_, v_;
  std::array<std::optional<GroupId>, 3> W2_;
};

// Same function as HafrModel::score, evaluated with the recipe-side terms
// (m_i, W1m m_i, W1x x_k, W2q q_i, W2m m_i, pooled averages) computed once
// and the user-side terms once per user. Sums are regrouped, so results
// agree with forward() to rounding, not bit for bit.
template <typename Real>
class HafrScorer {
 public:
  using Vec = Vector<Real>;
  using Mat = Matrix<Real>;

  explicit HafrScorer(const HafrModel<Real>& model) : model_(&model) {
    const auto& ps = model.params_;
    const auto& data = *model.data_;
    const auto& var = model.variant_;
    const auto N = static_cast<Eigen::Index>(data.num_recipes);
    const auto& Q = ps[model.Q_].value;
    const Eigen::Index D = Q.rows();
    if (var.use_image) {
      images_.resize(D, N);
      for (Eigen::Index i = 0; i < N; ++i) {
        images_.col(i) =
            model.map_image(data.feature_row(static_cast<RecipeIndex>(i)));
      }
    }
    if (var.use_ingredients && !var.ingredient_attention()) {
      pooled_.resize(D, N);
      for (Eigen::Index i = 0; i < N; ++i) {
        pooled_.col(i) = model.avg_pool_ingredients(data.ingredients[i]);
      }
    }
    if (var.ingredient_attention()) {
      ingredient_terms_ = ps[*model.W1x_].value * ps[*model.X_].value;
      if (model.W1m_) {
        image_terms1_ = ps[*model.W1m_].value * images_;
      }
    }
    if (var.component_attention()) {
      id_terms2_ = ps[*model.W2_[0]].value * Q;
      if (var.use_image) {
        image_terms2_ = ps[*model.W2_[1]].value * images_;
      }
      if (var.use_ingredients && !var.ingredient_attention()) {
        pooled_terms2_ = ps[*model.W2_[2]].value * pooled_;
      }
    }
    const auto& W3 = ps[model.W3_].value;
    W3p_ = W3.leftCols(D);
    W3q_ = W3.middleCols(D, D);
    W3pq_ = W3.rightCols(D);
  }

  // Scoring state for one user; not shareable across threads.
  class UserView {
   public:
    Real score(RecipeIndex i) {
      const auto& m = *s_->model_;
      if (i >= m.data_->num_recipes) {
        throw Error("hafr: recipe index out of range (" + std::to_string(i) +
                    ")");
      }
      const auto& ps = m.params_;
      const auto& var = m.variant_;
      const auto col = static_cast<Eigen::Index>(i);
      const auto q = ps[m.Q_].value.col(col);
      int C = 0;
      values_.col(C) = q;
      if (var.component_attention()) {
        logits2_(C) = v_.dot((a2_ + s_->id_terms2_.col(col)).array().tanh().matrix());
      }
      ++C;
      if (var.use_image) {
        values_.col(C) = s_->images_.col(col);
        if (var.component_attention()) {
          logits2_(C) =
              v_.dot((a2_ + s_->image_terms2_.col(col)).array().tanh().matrix());
        }
        ++C;
      }
      if (var.use_ingredients) {
        if (var.ingredient_attention()) {
          const auto& ids = m.data_->ingredients[i];
          const auto J = static_cast<Eigen::Index>(ids.size());
          logits1_.resize(J);
          pre_ = a1_;
          if (m.W1m_) {
            pre_ += s_->image_terms1_.col(col);
          }
          for (Eigen::Index j = 0; j < J; ++j) {
            logits1_(j) = h_.dot(
                (pre_ + s_->ingredient_terms_.col(ids[static_cast<std::size_t>(j)]))
                    .array()
                    .tanh()
                    .matrix());
          }
          const Vec alpha = detail::stable_softmax<Real>(logits1_);
          const auto& X = ps[*m.X_].value;
          auto x = values_.col(C);
          x.setZero();
          for (Eigen::Index j = 0; j < J; ++j) {
            x += alpha(j) * X.col(ids[static_cast<std::size_t>(j)]);
          }
          if (var.component_attention()) {
            logits2_(C) = v_.dot(
                (a2_ + ps[*m.W2_[2]].value * x).array().tanh().matrix());
          }
        } else {
          values_.col(C) = s_->pooled_.col(col);
          if (var.component_attention()) {
            logits2_(C) = v_.dot(
                (a2_ + s_->pooled_terms2_.col(col)).array().tanh().matrix());
          }
        }
        ++C;
      }
      if (var.component_attention()) {
        beta_ = detail::stable_softmax<Real>(logits2_);
      } else {
        beta_.setConstant(Real(1) / static_cast<Real>(C));
      }
      qf_.noalias() = values_ * beta_;
      hidden_.noalias() = mu_ * qf_;
      hidden_ += cu_;
      const Real out = z_.dot(hidden_.cwiseMax(Real(0)));
      if (!std::isfinite(static_cast<double>(out))) {
        throw NumericError("non-finite score for recipe " + std::to_string(i));
      }
      return out;
    }

   private:
    friend class HafrScorer;
    const HafrScorer* s_ = nullptr;
    Vec a1_, a2_, h_, v_, z_, cu_;
    Mat mu_;
    Mat values_;
    Vec logits1_, logits2_, pre_, beta_, qf_, hidden_;
  };

  UserView user(UserIndex u) const {
    const auto& m = *model_;
    if (u >= m.data_->num_users) {
      throw Error("hafr: user index out of range (" + std::to_string(u) + ")");
    }
    const auto& ps = m.params_;
    const auto& var = m.variant_;
    const Vec p = ps[m.P_].value.col(u);
    UserView view;
    view.s_ = this;
    if (var.ingredient_attention()) {
      view.a1_ = ps[*m.W1p_].value * p + ps[*m.b1_].value.col(0);
      view.h_ = ps[*m.h_].value.col(0);
    }
    if (var.component_attention()) {
      view.a2_ = ps[*m.W2p_].value * p + ps[*m.b2_].value.col(0);
      view.v_ = ps[*m.v_].value.col(0);
    }
    // W3 [p; q̃; p ⊙ q̃] = W3p p + (W3q + W3pq diag(p)) q̃
    view.mu_ = W3q_ + W3pq_ * p.asDiagonal();
    view.cu_ = W3p_ * p + ps[m.b3_].value.col(0);
    view.z_ = ps[m.z_].value.col(0);
    const int C = 1 + (var.use_image ? 1 : 0) + (var.use_ingredients ? 1 : 0);
    view.values_.resize(p.size(), C);
    view.logits2_.resize(C);
    view.beta_.resize(C);
    return view;
  }

 private:
  const HafrModel<Real>* model_;
  Mat images_;            // D x N
  Mat pooled_;            // D x N, average pooling only
  Mat ingredient_terms_;  // D1 x K
  Mat image_terms1_;      // D1 x N
  Mat id_terms2_;         // D2 x N
  Mat image_terms2_;      // D2 x N
  Mat pooled_terms2_;     // D2 x N
  Mat W3p_, W3q_, W3pq_;
};

}  // namespace hafr
