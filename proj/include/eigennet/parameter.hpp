// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "eigennet/tensor.hpp"

namespace eigennet {

/// A trainable tensor with its checkpoint name. `decay` selects whether
/// decoupled weight decay applies (biases opt out).
struct Parameter {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

using ParameterList = std::vector<Parameter>;

}  // namespace eigennet
