// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/nn.hpp"

#include <cmath>

namespace mrvm::nn {

void add_dense(diff::ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  if (in <= 0 || out <= 0) throw InvalidArgument("add_dense: non-positive size for '" + name + "'");
  auto& w = store.add(name + ".w", static_cast<std::size_t>(in), static_cast<std::size_t>(out));
  const double limit = std::sqrt(6.0 / (in + out));
  for (auto& v : w.data) v = uniform(rng, -limit, limit);
  store.add(name + ".b", 1, static_cast<std::size_t>(out));
}

diff::Var dense(const diff::Bindings& params, const std::string& name, diff::Var x) {
  const diff::Var y = diff::matmul(x, params[name + ".w"]);
  return diff::add(y, diff::broadcast(params[name + ".b"], y.rows(), y.cols()));
}

diff::Var activate(diff::Var x, Activation act) {
  return act == Activation::relu ? diff::relu(x) : diff::softplus(x);
}

void copy_prefix(diff::ParamStore& store, const std::string& from, const std::string& to) {
  const auto names = store.names();
  for (const auto& name : names) {
    if (name.compare(0, from.size(), from) != 0) continue;
    const std::string target = to + name.substr(from.size());
    if (store.contains(target))
      store.at(target) = store.at(name);
    else
      store.add(target, store.at(name));
  }
}

}  // namespace mrvm::nn
