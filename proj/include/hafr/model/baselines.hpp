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

#include <algorithm>
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

// Comparison models. All of them expose the same forward/backward surface as
// HafrModel so they train through the identical BPR loop.

namespace hafr {

struct BaselineHyper {
  int embedding_dim = 64;
  double lambda_embed = 0.1;
  double lambda_image = 0.01;
};

// ŷ = w0 + b_u + b_i + p_u · q_i
template <typename Real = double>
class MfBpr {
 public:
  using real_type = Real;
  using Vec = Vector<Real>;
  using GroupId = typename ParamStore<Real>::GroupId;

  struct Trace {
    UserIndex user = 0;
    RecipeIndex recipe = 0;
    Real score = 0;
  };

  static constexpr std::string_view kind() { return "mf-bpr"; }

  MfBpr(const Dataset& data, BaselineHyper hyper, std::uint64_t seed)
      : data_(&data), hyper_(hyper), params_(seed) {
    add_mf_groups(params_, data, hyper, ids_);
  }

  const Dataset& data() const { return *data_; }
  void rebind(const Dataset& data) { data_ = &data; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }
  std::string variant_name() const { return std::string(kind()); }
  nlohmann::ordered_json descriptor() const {
    return {{"kind", std::string(kind())},
            {"embedding_dim", hyper_.embedding_dim},
            {"lambda_embed", hyper_.lambda_embed},
            {"lambda_image", hyper_.lambda_image}};
  }

  Real mf_score(UserIndex u, RecipeIndex i) const {
    check_indices(*data_, u, i);
    return mf_part(params_, ids_, u, i);
  }

  Trace forward(UserIndex u, RecipeIndex i) const {
    return {u, i, mf_score(u, i)};
  }
  Real score(UserIndex u, RecipeIndex i) const { return mf_score(u, i); }

  void backward(const Trace& t, Real dscore) {
    if (dscore != Real(0)) {
      mf_backward(params_, ids_, t.user, t.recipe, dscore);
    }
  }
  void backward(const Trace& pos, const Trace& neg, Real loss_grad) {
    backward(pos, loss_grad);
    backward(neg, -loss_grad);
  }

  struct Ids {
    GroupId w0 = 0, bu = 0, bi = 0, P = 0, Q = 0;
  };

  static void add_mf_groups(ParamStore<Real>& store, const Dataset& data,
                            const BaselineHyper& hyper, Ids& ids) {
    const auto embed = static_cast<Real>(hyper.lambda_embed);
    const auto D = static_cast<Eigen::Index>(hyper.embedding_dim);
    const auto M = static_cast<Eigen::Index>(data.num_users);
    const auto N = static_cast<Eigen::Index>(data.num_recipes);
    if (D < 1) {
      throw Error("baseline: embedding_dim must be positive");
    }
    ids.w0 = store.add("w0", 1, 1, Init::zeros(), embed);
    ids.bu = store.add("bu", 1, M, Init::zeros(), embed, Layout::columns);
    ids.bi = store.add("bi", 1, N, Init::zeros(), embed, Layout::columns);
    ids.P = store.add("P", D, M, Init::gaussian(0.01), embed, Layout::columns);
    ids.Q = store.add("Q", D, N, Init::gaussian(0.01), embed, Layout::columns);
  }

  static Real mf_part(const ParamStore<Real>& s, const Ids& ids, UserIndex u,
                      RecipeIndex i) {
    return s[ids.w0].value(0, 0) + s[ids.bu].value(0, u) +
           s[ids.bi].value(0, i) +
           s[ids.P].value.col(u).dot(s[ids.Q].value.col(i));
  }

  static void mf_backward(ParamStore<Real>& s, const Ids& ids, UserIndex u,
                          RecipeIndex i, Real g) {
    s[ids.w0].grad(0, 0) += g;
    s[ids.w0].touch(0);
    s[ids.bu].grad(0, u) += g;
    s[ids.bu].touch(u);
    s[ids.bi].grad(0, i) += g;
    s[ids.bi].touch(i);
    auto& P = s[ids.P];
    auto& Q = s[ids.Q];
    P.grad.col(u) += g * Q.value.col(i);
    Q.grad.col(i) += g * P.value.col(u);
    P.touch(u);
    Q.touch(i);
  }

  static void check_indices(const Dataset& data, UserIndex u, RecipeIndex i) {
    if (u >= data.num_users || i >= data.num_recipes) {
      throw Error("baseline: index out of range");
    }
  }

 private:
  const Dataset* data_;
  BaselineHyper hyper_;
  ParamStore<Real> params_;
  Ids ids_;
};

// ŷ = mf + θ_u · (E v_i) + β_v · v_i
template <typename Real = double>
class Vbpr {
 public:
  using real_type = Real;
  using Vec = Vector<Real>;
  using GroupId = typename ParamStore<Real>::GroupId;
  using Mf = MfBpr<Real>;

  struct Trace {
    UserIndex user = 0;
    RecipeIndex recipe = 0;
    Vec visual;  // E v_i
    Real score = 0;
  };

  static constexpr std::string_view kind() { return "vbpr"; }

  Vbpr(const Dataset& data, BaselineHyper hyper, std::uint64_t seed)
      : data_(&data), hyper_(hyper), params_(seed) {
    Mf::add_mf_groups(params_, data, hyper, mf_);
    const auto D = static_cast<Eigen::Index>(hyper.embedding_dim);
    const auto F = static_cast<Eigen::Index>(data.feature_dim);
    const auto image = static_cast<Real>(hyper.lambda_image);
    theta_ = params_.add("theta", D, static_cast<Eigen::Index>(data.num_users),
                         Init::gaussian(0.01),
                         static_cast<Real>(hyper.lambda_embed), Layout::columns);
    E_ = params_.add("E", D, F, Init::xavier(), image);
    beta_v_ = params_.add("beta_v", F, 1, Init::zeros(), image);
  }

  const Dataset& data() const { return *data_; }
  void rebind(const Dataset& data) { data_ = &data; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }
  std::string variant_name() const { return std::string(kind()); }
  nlohmann::ordered_json descriptor() const {
    return {{"kind", std::string(kind())},
            {"embedding_dim", hyper_.embedding_dim},
            {"lambda_embed", hyper_.lambda_embed},
            {"lambda_image", hyper_.lambda_image}};
  }

  Trace forward(UserIndex u, RecipeIndex i) const {
    Mf::check_indices(*data_, u, i);
    const Vec v = features(i);
    Trace t{u, i, params_[E_].value * v, Real(0)};
    t.score = Mf::mf_part(params_, mf_, u, i) +
              params_[theta_].value.col(u).dot(t.visual) +
              params_[beta_v_].value.col(0).dot(v);
    return t;
  }
  Real score(UserIndex u, RecipeIndex i) const { return forward(u, i).score; }
  Real vbpr_score(UserIndex u, RecipeIndex i) const { return score(u, i); }

  void backward(const Trace& t, Real g) {
    if (g == Real(0)) {
      return;
    }
    Mf::mf_backward(params_, mf_, t.user, t.recipe, g);
    const Vec v = features(t.recipe);
    auto& theta = params_[theta_];
    auto& E = params_[E_];
    auto& bv = params_[beta_v_];
    theta.grad.col(t.user) += g * t.visual;
    theta.touch(t.user);
    E.grad.noalias() += (g * theta.value.col(t.user)) * v.transpose();
    E.touch(0);
    bv.grad.col(0) += g * v;
    bv.touch(0);
  }
  void backward(const Trace& pos, const Trace& neg, Real loss_grad) {
    backward(pos, loss_grad);
    backward(neg, -loss_grad);
  }

 private:
  Vec features(RecipeIndex i) const {
    const auto row = data_->feature_row(i);
    return Eigen::Map<const Eigen::VectorXf>(row.data(),
                                             static_cast<Eigen::Index>(row.size()))
        .template cast<Real>();
  }

  const Dataset* data_;
  BaselineHyper hyper_;
  ParamStore<Real> params_;
  typename Mf::Ids mf_;
  GroupId theta_ = 0, E_ = 0, beta_v_ = 0;
};

// Second-order factorization machine over user ⊕ recipe ⊕ ingredient
// features (user and recipe one-hot at 1, each ingredient at 1/J). With
// `use_image`, the projection E_fm v_i joins as one more factor-space entity
// at value 1 with its own first-order weight.
template <typename Real = double>
class FactorizationMachine {
 public:
  using real_type = Real;
  using Vec = Vector<Real>;
  using GroupId = typename ParamStore<Real>::GroupId;

  struct Feature {
    std::uint32_t index = 0;
    Real value = 0;
  };

  struct Trace {
    UserIndex user = 0;
    RecipeIndex recipe = 0;
    std::vector<Feature> active;
    Vec sum;     // Σ x_j V_j (+ E_fm v_i)
    Vec visual;  // E_fm v_i, empty without images
    Real score = 0;
  };

  FactorizationMachine(const Dataset& data, BaselineHyper hyper,
                       std::uint64_t seed, bool use_image)
      : data_(&data), hyper_(hyper), use_image_(use_image), params_(seed) {
    const auto D = static_cast<Eigen::Index>(hyper.embedding_dim);
    if (D < 1) {
      throw Error("fm: embedding_dim must be positive");
    }
    const auto embed = static_cast<Real>(hyper.lambda_embed);
    const auto total = static_cast<Eigen::Index>(
        data.num_users + data.num_recipes + data.num_ingredients);
    w0_ = params_.add("w0", 1, 1, Init::zeros(), embed);
    w_ = params_.add("w", 1, total, Init::zeros(), embed, Layout::columns);
    V_ = params_.add("V", D, total, Init::gaussian(0.01), embed,
                     Layout::columns);
    if (use_image) {
      const auto image = static_cast<Real>(hyper.lambda_image);
      E_ = params_.add("E_fm", D, static_cast<Eigen::Index>(data.feature_dim),
                       Init::xavier(), image);
      w_visual_ = params_.add("w_visual", 1, 1, Init::zeros(), image);
    }
  }

  std::string_view kind() const { return use_image_ ? "fm-vbpr" : "fm"; }
  std::string variant_name() const { return std::string(kind()); }
  bool uses_image() const { return use_image_; }
  const Dataset& data() const { return *data_; }
  void rebind(const Dataset& data) { data_ = &data; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }
  nlohmann::ordered_json descriptor() const {
    return {{"kind", std::string(kind())},
            {"embedding_dim", hyper_.embedding_dim},
            {"lambda_embed", hyper_.lambda_embed},
            {"lambda_image", hyper_.lambda_image}};
  }

  std::uint32_t user_feature(UserIndex u) const { return u; }
  std::uint32_t recipe_feature(RecipeIndex i) const {
    return static_cast<std::uint32_t>(data_->num_users) + i;
  }
  std::uint32_t ingredient_feature(IngredientIndex k) const {
    return static_cast<std::uint32_t>(data_->num_users + data_->num_recipes) + k;
  }

  // Active features for (u, i); repeated ingredient ids are merged.
  std::vector<Feature> features(UserIndex u, RecipeIndex i) const {
    std::vector<Feature> active{{user_feature(u), Real(1)},
                                {recipe_feature(i), Real(1)}};
    const auto& ids = data_->ingredients[i];
    const Real share = Real(1) / static_cast<Real>(ids.size());
    for (auto k : ids) {
      const auto f = ingredient_feature(k);
      auto it = std::find_if(active.begin(), active.end(),
                             [f](const Feature& x) { return x.index == f; });
      if (it == active.end()) {
        active.push_back({f, share});
      } else {
        it->value += share;
      }
    }
    return active;
  }

  // w0 + Σ w_j x_j + ½(‖Σ x_j V_j‖² − Σ x_j² ‖V_j‖²), plus the visual entity
  // when enabled.
  Trace evaluate(std::vector<Feature> active, const Vec* visual_in,
                 UserIndex u = 0, RecipeIndex i = 0) const {
    const auto& V = params_[V_].value;
    const auto& w = params_[w_].value;
    Trace t;
    t.user = u;
    t.recipe = i;
    t.active = std::move(active);
    t.sum = Vec::Zero(V.rows());
    Real linear = params_[w0_].value(0, 0);
    Real self = 0;
    for (const auto& f : t.active) {
      linear += w(0, f.index) * f.value;
      t.sum.noalias() += f.value * V.col(f.index);
      self += f.value * f.value * V.col(f.index).squaredNorm();
    }
    if (visual_in) {
      t.visual = *visual_in;
      linear += params_[*w_visual_].value(0, 0);
      t.sum += t.visual;
      self += t.visual.squaredNorm();
    }
    t.score = linear + Real(0.5) * (t.sum.squaredNorm() - self);
    return t;
  }

  Trace forward(UserIndex u, RecipeIndex i) const {
    MfBpr<Real>::check_indices(*data_, u, i);
    if (use_image_) {
      const Vec vis = visual(i);
      return evaluate(features(u, i), &vis, u, i);
    }
    return evaluate(features(u, i), nullptr, u, i);
  }
  Real score(UserIndex u, RecipeIndex i) const { return forward(u, i).score; }
  Real fm_score(UserIndex u, RecipeIndex i) const { return score(u, i); }

  void backward(const Trace& t, Real g) {
    if (g == Real(0)) {
      return;
    }
    auto& w0 = params_[w0_];
    auto& w = params_[w_];
    auto& V = params_[V_];
    w0.grad(0, 0) += g;
    w0.touch(0);
    for (const auto& f : t.active) {
      w.grad(0, f.index) += g * f.value;
      w.touch(f.index);
      // ∂/∂V_j = x_j (S − x_j V_j)
      V.grad.col(f.index) +=
          (g * f.value) * (t.sum - f.value * V.value.col(f.index));
      V.touch(f.index);
    }
    if (use_image_) {
      auto& E = params_[*E_];
      auto& wv = params_[*w_visual_];
      wv.grad(0, 0) += g;
      wv.touch(0);
      // ∂/∂e = S − e (the sum of the other entities' factors)
      const Vec de = g * (t.sum - t.visual);
      const auto row = data_->feature_row(t.recipe);
      const Vec v = Eigen::Map<const Eigen::VectorXf>(
                        row.data(), static_cast<Eigen::Index>(row.size()))
                        .template cast<Real>();
      E.grad.noalias() += de * v.transpose();
      E.touch(0);
    }
  }
  void backward(const Trace& pos, const Trace& neg, Real loss_grad) {
    backward(pos, loss_grad);
    backward(neg, -loss_grad);
  }

  Vec visual(RecipeIndex i) const {
    const auto row = data_->feature_row(i);
    return params_[*E_].value *
           Eigen::Map<const Eigen::VectorXf>(row.data(),
                                             static_cast<Eigen::Index>(row.size()))
               .template cast<Real>();
  }

 private:
  const Dataset* data_;
  BaselineHyper hyper_;
  bool use_image_;
  ParamStore<Real> params_;
  GroupId w0_ = 0, w_ = 0, V_ = 0;
  std::optional<GroupId> E_, w_visual_;
};

}  // namespace hafr
