// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "budget.hpp"
#include "compressor.hpp"
#include "niah.hpp"
#include "sim.hpp"

namespace kvbudget {

/// Runs the toy model over `tokens`, captures every head's cache and trailing
/// query window, and compresses each head to its planned capacity.
ModelCompression compress_toy(const BudgetPlan& plan, const ToyTransformerConfig& model, const TokenSequence& tokens,
                              std::size_t window, const SelectOptions& options = {});

}  // namespace kvbudget
