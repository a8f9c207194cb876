// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"
#include "mrvm/rng.hpp"

/// Small shared layer helpers.
namespace mrvm::nn {

/// Adds `<name>.w` (in x out, Glorot-uniform) and `<name>.b` (1 x out, zero).
void add_dense(diff::ParamStore& store, const std::string& name, int in, int out, Rng& rng);

/// x * W + b, with b broadcast over rows.
diff::Var dense(const diff::Bindings& params, const std::string& name, diff::Var x);

diff::Var activate(diff::Var x, Activation act);

/// Copies every `<from>*` parameter to `<to>*` (appending if absent).
void copy_prefix(diff::ParamStore& store, const std::string& from, const std::string& to);

}  // namespace mrvm::nn
