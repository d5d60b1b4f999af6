// Shared helpers for the test suites: random tensors, an independent
// scripted oracle for routing-by-agreement, and a conlleval-convention
// chunk scorer. The oracles are deliberately written as plain loops with
// no reference to the tape implementation.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "capsule_nlu/rng.hpp"
#include "capsule_nlu/tensor.hpp"

namespace testutil {

template <typename S>
capsnlu::Tensor<S> rand_tensor(capsnlu::Rng& rng, capsnlu::Shape shape, double lo = -1.0,
                               double hi = 1.0, bool needs_grad = false) {
  auto t = capsnlu::Tensor<S>::zeros(std::move(shape), needs_grad);
  for (S& v : t.value()) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

// --- scripted routing oracle -------------------------------------------
// Plain-double execution of the routing algorithm: logits start at zero;
// per iteration the per-input softmax over outputs weights the prediction
// vectors into s_k, squashed into v_k, and the logits gain p.v (plus an
// optional constant bias term -- the re-routing variant).

struct RoutingOracleResult {
  std::vector<std::vector<double>> agreement;  // [K][N], final iteration
  std::vector<std::vector<double>> outputs;    // [K][D], final iteration
  std::vector<std::vector<double>> logits;     // [K][N], after final update
};

inline RoutingOracleResult routing_oracle(
    const std::vector<std::vector<std::vector<double>>>& preds,  // [K][D][N]
    int iterations, const std::vector<double>& mask = {},
    const std::vector<std::vector<double>>& logit_bias = {}) {
  const size_t num_out = preds.size();
  const size_t dim = preds[0].size();
  const size_t num_in = preds[0][0].size();

  std::vector<std::vector<double>> b(num_out, std::vector<double>(num_in, 0.0));
  RoutingOracleResult res;
  for (int iter = 0; iter < iterations; ++iter) {
    // c_t = softmax over outputs of b[.][t]
    std::vector<std::vector<double>> c(num_out, std::vector<double>(num_in, 0.0));
    for (size_t t = 0; t < num_in; ++t) {
      double mx = b[0][t];
      for (size_t k = 1; k < num_out; ++k) mx = std::max(mx, b[k][t]);
      double sum = 0.0;
      for (size_t k = 0; k < num_out; ++k) sum += std::exp(b[k][t] - mx);
      for (size_t k = 0; k < num_out; ++k) c[k][t] = std::exp(b[k][t] - mx) / sum;
    }
    std::vector<std::vector<double>> v(num_out, std::vector<double>(dim, 0.0));
    for (size_t k = 0; k < num_out; ++k) {
      std::vector<double> s(dim, 0.0);
      for (size_t t = 0; t < num_in; ++t) {
        const double w = c[k][t] * (mask.empty() ? 1.0 : mask[t]);
        for (size_t d = 0; d < dim; ++d) s[d] += w * preds[k][d][t];
      }
      double ss = 0.0;
      for (double x : s) ss += x * x;
      const double norm = std::sqrt(ss);
      const double factor = norm > 0.0 ? (ss / (1.0 + ss)) / norm : 0.0;
      for (size_t d = 0; d < dim; ++d) v[k][d] = s[d] * factor;
    }
    for (size_t k = 0; k < num_out; ++k) {
      for (size_t t = 0; t < num_in; ++t) {
        double dot = 0.0;
        for (size_t d = 0; d < dim; ++d) dot += preds[k][d][t] * v[k][d];
        b[k][t] += dot;
        if (!logit_bias.empty()) b[k][t] += logit_bias[k][t];
      }
    }
    res.agreement = c;
    res.outputs = v;
  }
  res.logits = b;
  return res;
}

// --- conlleval-convention chunk scorer -----------------------------------
// Counts exact-match chunks using the classic start/end predicates rather
// than run building, as an independent cross-check of span extraction.

inline bool chunk_start(const std::string& prev, const std::string& tag) {
  if (tag == "O") return false;
  const char p = tag[0];
  const std::string type = tag.substr(2);
  if (p == 'B') return true;
  // I-: starts a chunk unless the previous tag continues the same type
  if (prev == "O") return true;
  const std::string prev_type = prev.size() > 2 ? prev.substr(2) : "";
  return prev_type != type;
}

inline bool chunk_end(const std::string& tag, const std::string& next) {
  if (tag == "O") return false;
  const std::string type = tag.substr(2);
  if (next == "O") return true;
  const std::string next_type = next.size() > 2 ? next.substr(2) : "";
  if (next[0] == 'B') return true;
  return next_type != type;
}

struct ChunkCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

inline std::map<std::tuple<std::string, int, int>, int> conll_chunks(
    const std::vector<std::string>& tags) {
  std::map<std::tuple<std::string, int, int>, int> chunks;
  const int n = static_cast<int>(tags.size());
  int start = -1;
  std::string type;
  for (int i = 0; i < n; ++i) {
    const std::string prev = i > 0 ? tags[i - 1] : "O";
    const std::string next = i + 1 < n ? tags[i + 1] : "O";
    if (chunk_start(prev, tags[i])) {
      start = i;
      type = tags[i].substr(2);
    }
    if (start >= 0 && chunk_end(tags[i], next)) {
      ++chunks[{type, start, i}];
      start = -1;
    }
  }
  return chunks;
}

inline ChunkCounts conll_score(const std::vector<std::vector<std::string>>& pred,
                               const std::vector<std::vector<std::string>>& gold) {
  ChunkCounts counts;
  for (size_t i = 0; i < pred.size(); ++i) {
    auto p = conll_chunks(pred[i]);
    auto g = conll_chunks(gold[i]);
    for (const auto& [chunk, np] : p) {
      auto it = g.find(chunk);
      const int ng = it == g.end() ? 0 : it->second;
      counts.tp += std::min(np, ng);
      counts.fp += std::max(0, np - ng);
    }
    for (const auto& [chunk, ng] : g) {
      auto it = p.find(chunk);
      const int np = it == p.end() ? 0 : it->second;
      counts.fn += std::max(0, ng - np);
    }
  }
  return counts;
}

}  // namespace testutil
