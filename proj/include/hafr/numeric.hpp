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
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hafr/io.hpp"
#include "hafr/rng.hpp"

namespace hafr {

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

inline constexpr double kAdagradEpsilon = 1e-8;

enum class InitScheme { zeros, gaussian, xavier_uniform };

struct Init {
  InitScheme scheme = InitScheme::zeros;
  double sigma = 0.01;

  static Init zeros() { return {InitScheme::zeros, 0.0}; }
  static Init gaussian(double sigma) { return {InitScheme::gaussian, sigma}; }
  static Init xavier() { return {InitScheme::xavier_uniform, 0.0}; }
};

// Embedding tables are column-sparse: only columns looked up in the current
// batch are regularized and updated. Dense groups are updated whole.
enum class Layout { dense, columns };

// A named parameter tensor with its gradient and Adagrad accumulator.
template <typename Real>
struct ParamGroup {
  std::string name;
  Matrix<Real> value;
  Matrix<Real> grad;
  Matrix<Real> adagrad_acc;
  Real l2 = 0;
  Layout layout = Layout::dense;

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }

  // Marks column c as touched in the current step.
  void touch(Eigen::Index c) {
    if (layout == Layout::dense) {
      dense_touched_ = true;
      return;
    }
    if (!column_mask_[static_cast<std::size_t>(c)]) {
      column_mask_[static_cast<std::size_t>(c)] = 1;
      touched_.push_back(static_cast<std::uint32_t>(c));
    }
  }
  void touch_all() {
    if (layout == Layout::dense) {
      dense_touched_ = true;
      return;
    }
    for (Eigen::Index c = 0; c < cols(); ++c) {
      touch(c);
    }
  }

  // Touched column indices (all columns for a touched dense group).
  std::vector<std::uint32_t> touched_columns() const {
    if (layout == Layout::columns) {
      return touched_;
    }
    std::vector<std::uint32_t> all;
    if (dense_touched_) {
      all.resize(static_cast<std::size_t>(cols()));
      for (std::size_t c = 0; c < all.size(); ++c) {
        all[c] = static_cast<std::uint32_t>(c);
      }
    }
    return all;
  }
  bool any_touched() const {
    return layout == Layout::dense ? dense_touched_ : !touched_.empty();
  }
  void clear_touched() {
    for (auto c : touched_) {
      column_mask_[c] = 0;
    }
    touched_.clear();
    dense_touched_ = false;
  }

  void reset_touch_state() {
    column_mask_.assign(static_cast<std::size_t>(cols()), 0);
    touched_.clear();
    dense_touched_ = false;
  }

 private:
  std::vector<std::uint8_t> column_mask_;
  std::vector<std::uint32_t> touched_;
  bool dense_touched_ = false;
};

// grad[:, c] += 2 * l2 * value[:, c] for each listed column.
template <typename Real>
void apply_l2(ParamGroup<Real>& g, std::span<const std::uint32_t> columns) {
  if (g.l2 == Real(0)) {
    return;
  }
  const Real scale = Real(2) * g.l2;
  for (auto c : columns) {
    g.grad.col(c) += scale * g.value.col(c);
  }
}

template <typename Real>
void apply_l2(ParamGroup<Real>& g) {
  const auto cols = g.touched_columns();
  apply_l2<Real>(g, cols);
}

// Adagrad over touched columns: acc += g^2; value -= lr * g / (sqrt(acc)+eps).
// Gradients are zeroed and the touch set cleared afterward.
template <typename Real>
void adagrad_step(ParamGroup<Real>& g, Real learning_rate) {
  if (!(learning_rate >= Real(0))) {
    throw NumericError("adagrad_step: learning rate must be non-negative");
  }
  const auto eps = static_cast<Real>(kAdagradEpsilon);
  for (auto c : g.touched_columns()) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const Real grad = g.grad(r, c);
      if (!std::isfinite(static_cast<double>(grad))) {
        throw NumericError("non-finite gradient in group '" + g.name +
                           "' at (" + std::to_string(r) + ", " +
                           std::to_string(c) + ")");
      }
      if (grad == Real(0)) {
        continue;
      }
      Real& acc = g.adagrad_acc(r, c);
      acc += grad * grad;
      g.value(r, c) -= learning_rate * grad / (std::sqrt(acc) + eps);
      g.grad(r, c) = Real(0);
    }
  }
  g.clear_touched();
}

// Θ: every learnable tensor of a model, addressed by stable group id.
template <typename Real>
class ParamStore {
 public:
  using GroupId = std::size_t;

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  // Values are drawn from a stream keyed by (seed, name), so adding a group
  // never perturbs the initialization of another.
  GroupId add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
              Init init, Real l2, Layout layout = Layout::dense) {
    if (rows < 1 || cols < 1) {
      throw Error("param group '" + name + "': shape must be at least 1x1");
    }
    if (index_.contains(name)) {
      throw Error("duplicate param group '" + name + "'");
    }
    if (!(l2 >= Real(0))) {
      throw Error("param group '" + name + "': l2 must be non-negative");
    }
    ParamGroup<Real> g;
    g.name = name;
    g.l2 = l2;
    g.layout = layout;
    g.value = Matrix<Real>::Zero(rows, cols);
    g.grad = Matrix<Real>::Zero(rows, cols);
    g.adagrad_acc = Matrix<Real>::Zero(rows, cols);
    g.reset_touch_state();
    auto rng = derive_stream(seed_, "init/" + name);
    switch (init.scheme) {
      case InitScheme::zeros:
        break;
      case InitScheme::gaussian:
        if (!(init.sigma > 0.0)) {
          throw Error("param group '" + name + "': sigma must be positive");
        }
        // Column-major fill: column c only depends on draws for columns < c.
        for (Eigen::Index c = 0; c < cols; ++c) {
          for (Eigen::Index r = 0; r < rows; ++r) {
            g.value(r, c) = static_cast<Real>(init.sigma * rng.normal());
          }
        }
        break;
      case InitScheme::xavier_uniform: {
        const double limit =
            std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index c = 0; c < cols; ++c) {
          for (Eigen::Index r = 0; r < rows; ++r) {
            g.value(r, c) =
                static_cast<Real>(limit * (2.0 * rng.uniform() - 1.0));
          }
        }
        break;
      }
    }
    index_.emplace(name, groups_.size());
    groups_.push_back(std::move(g));
    return groups_.size() - 1;
  }

  ParamGroup<Real>& operator[](GroupId id) { return groups_[id]; }
  const ParamGroup<Real>& operator[](GroupId id) const { return groups_[id]; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  GroupId id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error("no param group '" + name + "'");
    }
    return it->second;
  }
  ParamGroup<Real>& get(const std::string& name) { return groups_[id(name)]; }
  const ParamGroup<Real>& get(const std::string& name) const {
    return groups_[id(name)];
  }

  std::size_t size() const { return groups_.size(); }
  auto begin() { return groups_.begin(); }
  auto end() { return groups_.end(); }
  auto begin() const { return groups_.begin(); }
  auto end() const { return groups_.end(); }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& g : groups_) {
      n += static_cast<std::size_t>(g.value.size());
    }
    return n;
  }

  // λ Σ θ² over touched columns of every group.
  Real l2_penalty() const {
    Real total = 0;
    for (const auto& g : groups_) {
      if (g.l2 == Real(0)) {
        continue;
      }
      for (auto c : g.touched_columns()) {
        total += g.l2 * g.value.col(c).squaredNorm();
      }
    }
    return total;
  }

  void apply_l2() {
    for (auto& g : groups_) {
      hafr::apply_l2(g);
    }
  }

  void adagrad_step(Real learning_rate) {
    for (auto& g : groups_) {
      hafr::adagrad_step(g, learning_rate);
    }
    ++steps_;
  }

  void zero_grad() {
    for (auto& g : groups_) {
      g.grad.setZero();
      g.clear_touched();
    }
  }

  // Copies values of same-named, same-shaped groups from `other`.
  void copy_values_from(const ParamStore& other) {
    for (auto& g : groups_) {
      if (other.contains(g.name)) {
        const auto& src = other.get(g.name);
        if (src.value.rows() == g.value.rows() &&
            src.value.cols() == g.value.cols()) {
          g.value = src.value;
        }
      }
    }
  }

 private:
  std::vector<ParamGroup<Real>> groups_;
  std::unordered_map<std::string, GroupId> index_;
  std::uint64_t seed_ = 0;
  std::uint64_t steps_ = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::string worst_group;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of the analytic gradient currently held in
// store's grad buffers. Probes are drawn from touched entries (entries the
// analytic pass could have reached); each probe perturbs one value by ±h and
// compares (L(θ+h) − L(θ−h)) / 2h against grad with the error measure
// |fd − g| / max(1, |fd|, |g|).
inline GradCheckResult grad_check(
    const std::function<double(ParamStore<double>&)>& loss_fn,
    ParamStore<double>& store, std::size_t probes, double h,
    std::uint64_t seed = 0) {
  if (!(h >= 1e-6 && h <= 1e-4)) {
    throw Error("grad_check: h must lie in [1e-6, 1e-4]");
  }
  std::vector<std::pair<std::size_t, std::vector<std::uint32_t>>> candidates;
  for (std::size_t gid = 0; gid < store.size(); ++gid) {
    auto cols = store[gid].touched_columns();
    if (!cols.empty()) {
      candidates.emplace_back(gid, std::move(cols));
    }
  }
  GradCheckResult result;
  if (candidates.empty()) {
    return result;
  }
  auto rng = derive_stream(seed, "grad_check");
  for (std::size_t p = 0; p < probes; ++p) {
    // Round-robin over groups so small groups (biases, z) are always probed.
    const auto& [gid, cols] = candidates[p % candidates.size()];
    auto& g = store[gid];
    const auto c = static_cast<Eigen::Index>(cols[rng.below(cols.size())]);
    const auto r = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(g.rows())));
    const double analytic = g.grad(r, c);
    const double saved = g.value(r, c);
    g.value(r, c) = saved + h;
    const double up = loss_fn(store);
    g.value(r, c) = saved - h;
    const double down = loss_fn(store);
    g.value(r, c) = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite loss probing '" + g.name +
                         "'");
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - analytic) /
                       std::max({1.0, std::abs(numeric), std::abs(analytic)});
    ++result.probes;
    if (err > result.max_relative_error || result.worst_group.empty()) {
      result.max_relative_error = std::max(result.max_relative_error, err);
      if (err >= result.max_relative_error) {
        result.worst_group = g.name;
        result.worst_row = r;
        result.worst_col = c;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace hafr
