// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline.hpp"

#include "error.hpp"

namespace kvbudget {

ModelCompression compress_toy(const BudgetPlan& plan, const ToyTransformerConfig& model, const TokenSequence& tokens,
                              std::size_t window, const SelectOptions& options) {
    KVB_CHECK(plan.layers == model.num_layers && plan.heads == model.num_heads,
              "plan/model mismatch: plan is " + std::to_string(plan.layers) + "x" + std::to_string(plan.heads) +
                  ", model is " + std::to_string(model.num_layers) + "x" + std::to_string(model.num_heads));
    KVB_CHECK(window >= 1 && window <= tokens.size(), "window exceeds cache");
    const ToyTransformer transformer(model);
    auto captured = transformer.capture(tokens, window);
    std::vector<KVCacheHead> caches;
    std::vector<DenseMatrix> queries;
    caches.reserve(captured.size());
    queries.reserve(captured.size());
    for (auto& c : captured) {
        caches.push_back(KVCacheHead::from_rows(std::move(c.keys), std::move(c.values)));
        queries.push_back(std::move(c.window_queries));
    }
    return compress_model(caches, plan, queries, window, options);
}

}  // namespace kvbudget
