// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "eigennet/checkpoint.hpp"
#include "eigennet/data.hpp"
#include "eigennet/eigen_layers.hpp"
#include "eigennet/errors.hpp"
#include "eigennet/harness.hpp"
#include "eigennet/model.hpp"
#include "eigennet/ops.hpp"
#include "eigennet/optim.hpp"
#include "eigennet/parameter.hpp"
#include "eigennet/tape.hpp"
#include "eigennet/tensor.hpp"
#include "eigennet/trainers.hpp"
#include "eigennet/worker_pool.hpp"
