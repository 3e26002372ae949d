// SPDX-License-Identifier: Apache-2.0
//
// Turns raw detector output into the next pseudo-labelled training set.
// No confidence threshold: the top-k boxes are kept unless they overlap a
// more confident box at IoU >= iou_max. Labels do not affect suppression.
#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "aptdet/box.hpp"
#include "aptdet/pseudo_labels.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

inline constexpr int kDefaultTopK = 100;
inline constexpr double kDefaultIouMax = 0.55;
inline constexpr int kDefaultSelfTrainStages = 2;

struct ScoredBox {
  Box box;  // normalized
  int label = 0;
  double score = 0.0;

  bool operator==(const ScoredBox&) const = default;
};

struct SelfTrainConfig {
  int top_k = kDefaultTopK;
  double iou_max = kDefaultIouMax;
};

// Indices of the surviving boxes, most confident first.
inline std::vector<std::size_t> select_predictions(const std::vector<ScoredBox>& preds,
                                                   const SelfTrainConfig& cfg = {}) {
  if (cfg.top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (!(cfg.iou_max > 0.0 && cfg.iou_max <= 1.0)) throw std::invalid_argument("iou_max must lie in (0, 1]");
  for (const auto& p : preds)
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw std::invalid_argument("score outside [0, 1]");

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = preds[a];
    const auto& pb = preds[b];
    if (pa.score != pb.score) return pa.score > pb.score;
    if (pa.box.x != pb.box.x) return pa.box.x < pb.box.x;
    return pa.box.y < pb.box.y;
  });
  if (order.size() > static_cast<std::size_t>(cfg.top_k)) order.resize(static_cast<std::size_t>(cfg.top_k));

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(preds[idx].box, preds[k].box) < cfg.iou_max;
    });
    if (clear) kept.push_back(idx);
  }
  return kept;
}

inline std::vector<ScoredBox> filter_predictions(const std::vector<ScoredBox>& preds,
                                                 const SelfTrainConfig& cfg = {}) {
  std::vector<ScoredBox> out;
  for (std::size_t i : select_predictions(preds, cfg)) out.push_back(preds[i]);
  return out;
}

// Detector output for one image, boxes in absolute pixels.
struct ImagePredictions {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Box> boxes;
  std::vector<int> labels;
  std::vector<double> scores;
};

// Filters each image and keeps the surviving boxes verbatim (same pixel
// coordinates, label and score). IoU is invariant to per-axis scaling, so
// filtering in pixel space equals filtering in normalized space.
inline std::vector<AnnotatedImage> build_next_training_set(const std::vector<ImagePredictions>& images,
                                                           const SelfTrainConfig& cfg = {}) {
  std::vector<AnnotatedImage> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    if (img.boxes.size() != img.labels.size() || img.boxes.size() != img.scores.size())
      throw std::invalid_argument("image '" + img.image_id + "': prediction arrays differ in length");
    std::vector<ScoredBox> scored(img.boxes.size());
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i] = {img.boxes[i], img.labels[i], img.scores[i]};
    AnnotatedImage a;
    a.image_id = img.image_id;
    a.width = img.width;
    a.height = img.height;
    for (std::size_t i : select_predictions(scored, cfg)) {
      a.boxes.push_back(img.boxes[i]);
      a.labels.push_back(img.labels[i]);
      a.scores.push_back(img.scores[i]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace aptdet
