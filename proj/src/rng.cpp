// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/rng.hpp"

#include <sstream>

#include "mrvm/error.hpp"

namespace mrvm {

std::string rng_state_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_state_from_string(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  is >> rng;
  if (is.fail()) throw DataError("corrupt rng state");
  return rng;
}

}  // namespace mrvm
