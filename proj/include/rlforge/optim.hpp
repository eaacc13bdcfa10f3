// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "rlforge/autodiff.hpp"

namespace rlforge::optim {

using ParamMap = std::map<std::string, ad::Array>;

// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update; parameters without a gradient entry are untouched.
  // A zero gradient leaves the parameter unchanged. Throws
  // std::invalid_argument for shape mismatches.
  void apply(ParamMap& params, const ParamMap& grads);

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  std::size_t steps() const noexcept { return t_; }
  const ParamMap& first_moment() const noexcept { return m_; }
  const ParamMap& second_moment() const noexcept { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  ParamMap m_, v_;
};

double global_norm(const ParamMap& grads);
bool all_finite(const ParamMap& grads);

// Elementwise a += scale * b over matching names.
void accumulate(ParamMap& into, const ParamMap& from, double scale = 1.0);

}  // namespace rlforge::optim
