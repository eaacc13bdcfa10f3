// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rlforge::optim {

void Adam::apply(ParamMap& params, const ParamMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const ad::Array& g = git->second;
    if (g.shape != p.shape) throw std::invalid_argument("gradient shape mismatch for " + name);
    auto [mit, fresh] = m_.try_emplace(name, ad::Array(p.shape, 0.0));
    auto vit = v_.try_emplace(name, ad::Array(p.shape, 0.0)).first;
    ad::Array& m = mit->second;
    ad::Array& v = vit->second;
    (void)fresh;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      if (m[i] == 0.0) continue;
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double global_norm(const ParamMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const ParamMap& grads) {
  for (const auto& [name, g] : grads)
    for (double v : g.data)
      if (!std::isfinite(v)) return false;
  return true;
}

void accumulate(ParamMap& into, const ParamMap& from, double scale) {
  for (const auto& [name, g] : from) {
    auto [it, fresh] = into.try_emplace(name, ad::Array(g.shape, 0.0));
    (void)fresh;
    if (it->second.shape != g.shape) throw std::invalid_argument("accumulate: shape mismatch for " + name);
    for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += scale * g[i];
  }
}

}  // namespace rlforge::optim
