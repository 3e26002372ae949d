// SPDX-License-Identifier: Apache-2.0
//
// Set-prediction training objective: optimal one-to-one matching between
// the padded ground truth and the Q prediction slots, and the detection
// loss evaluated under that matching.
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aptdet/box.hpp"
#include "aptdet/pseudo_labels.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

using CostMatrix = std::vector<std::vector<double>>;

// Kuhn-Munkres with row/column potentials, O(Q^3). Returns assignment
// where assignment[row] = column, minimizing the summed cost.
inline std::vector<int> hungarian_match(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw std::invalid_argument("cost matrix must be square");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("cost matrix contains non-finite values");
  }
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based internally; column 0 is a virtual start column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = owner[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[r0 - 1][c - 1] - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[owner[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      owner[col0] = owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (std::size_t c = 1; c <= n; ++c) assignment[owner[c] - 1] = static_cast<int>(c - 1);
  return assignment;
}

inline double assignment_cost(const CostMatrix& cost, std::span<const int> assignment) {
  double total = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r) total += cost[r][static_cast<std::size_t>(assignment[r])];
  return total;
}

struct Prediction {
  Box box;                     // normalized
  std::vector<double> logits;  // C + 1 entries; the last one is "no object"
};

enum class MatchClassTerm { Probability, LogProbability };

struct LossWeights {
  double l1 = 5.0;
  double giou = 2.0;
  double no_object = 0.1;  // multiplies the class loss of slots matched to padding
  MatchClassTerm match_class_term = MatchClassTerm::Probability;
};

struct MatchResult {
  std::vector<int> assignment;  // prediction q -> ground-truth slot (>= gt count means padding)
  double matching_cost = 0.0;
  double class_loss = 0.0;
  double box_l1 = 0.0;    // weighted
  double box_giou = 0.0;  // weighted
  double total_loss = 0.0;
};

inline std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline double l1_center_form(const Box& a, const Box& b) {
  const auto ca = to_center_form(a), cb = to_center_form(b);
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += std::abs(ca[i] - cb[i]);
  return s;
}

// Ground truth of one image in the normalized frame, padded to Q slots.
struct PaddedTargets {
  int num_classes = 0;  // C; class index C is "no object"
  std::vector<Box> boxes;
  std::vector<int> classes;  // size Q
  std::size_t real = 0;      // slots [0, real) carry objects
};

inline PaddedTargets pad_targets(const AnnotatedImage& gt, std::span<const Prediction> preds) {
  const std::size_t q = preds.size();
  if (q < gt.boxes.size())
    throw std::invalid_argument("Q=" + std::to_string(q) + " is smaller than the ground-truth count " +
                                std::to_string(gt.boxes.size()));
  if (gt.width <= 0 || gt.height <= 0) throw std::invalid_argument("ground-truth image has no size");
  PaddedTargets t;
  t.real = gt.boxes.size();
  if (q == 0) return t;
  const std::size_t width = preds[0].logits.size();
  if (width < 2) throw std::invalid_argument("logits need at least one class plus no-object");
  t.num_classes = static_cast<int>(width) - 1;
  for (const auto& p : preds) {
    if (p.logits.size() != width) throw std::invalid_argument("predictions disagree on the class count");
    for (double l : p.logits)
      if (!std::isfinite(l)) throw std::invalid_argument("non-finite logit");
  }
  for (std::size_t j = 0; j < t.real; ++j) {
    if (gt.labels[j] < 0 || gt.labels[j] >= t.num_classes)
      throw std::invalid_argument("ground-truth label outside the predicted class range");
    t.boxes.push_back(to_normalized(gt.boxes[j], gt.width, gt.height));
    t.classes.push_back(gt.labels[j]);
  }
  t.boxes.resize(q);
  t.classes.resize(q, t.num_classes);
  return t;
}

// cost[q][j]: prediction q against ground-truth slot j.
inline CostMatrix matching_cost_matrix(const PaddedTargets& t, std::span<const Prediction> preds,
                                       const LossWeights& w) {
  const std::size_t q = preds.size();
  CostMatrix cost(q, std::vector<double>(q, 0.0));
  for (std::size_t i = 0; i < q; ++i) {
    const auto logp = log_softmax(preds[i].logits);
    for (std::size_t j = 0; j < q; ++j) {
      const double lp = logp[static_cast<std::size_t>(t.classes[j])];
      double c = w.match_class_term == MatchClassTerm::Probability ? -std::exp(lp) : -lp;
      if (j < t.real)
        c += w.l1 * l1_center_form(t.boxes[j], preds[i].box) + w.giou * (1.0 - giou(t.boxes[j], preds[i].box));
      cost[i][j] = c;
    }
  }
  return cost;
}

// Loss decomposition for a given prediction -> slot assignment.
inline MatchResult loss_for_assignment(const PaddedTargets& t, std::span<const Prediction> preds,
                                       const LossWeights& w, std::vector<int> assignment) {
  MatchResult r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto j = static_cast<std::size_t>(assignment[i]);
    const auto logp = log_softmax(preds[i].logits);
    const double nll = -logp[static_cast<std::size_t>(t.classes[j])];
    if (j < t.real) {
      r.class_loss += nll;
      r.box_l1 += w.l1 * l1_center_form(t.boxes[j], preds[i].box);
      r.box_giou += w.giou * (1.0 - giou(t.boxes[j], preds[i].box));
    } else {
      r.class_loss += w.no_object * nll;
    }
  }
  r.total_loss = r.class_loss + r.box_l1 + r.box_giou;
  r.assignment = std::move(assignment);
  return r;
}

inline MatchResult detection_loss(const AnnotatedImage& gt, std::span<const Prediction> preds,
                                  const LossWeights& w = {}) {
  const PaddedTargets t = pad_targets(gt, preds);
  const CostMatrix cost = matching_cost_matrix(t, preds, w);
  auto assignment = hungarian_match(cost);
  const double matched = assignment_cost(cost, assignment);
  MatchResult r = loss_for_assignment(t, preds, w, std::move(assignment));
  r.matching_cost = matched;
  return r;
}

}  // namespace aptdet
