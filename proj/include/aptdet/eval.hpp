// SPDX-License-Identifier: Apache-2.0
//
// Proposal-quality metrics: class-agnostic average recall at k, agreement
// of predicted and assigned pseudo-labels, and cluster purity.
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptdet/box.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

// COCO thresholds 0.50:0.05:0.95, written out so each equals its decimal literal.
inline constexpr std::array<double, 10> kCocoIouThresholds = {0.5,  0.55, 0.6,  0.65, 0.7,
                                                              0.75, 0.8,  0.85, 0.9,  0.95};

// Proposal order used for top-k: by descending score when scored (stable),
// otherwise the given order.
inline std::vector<std::size_t> ranked_proposals(const AnnotatedImage& props) {
  std::vector<std::size_t> order(props.boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!props.scores.empty())
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return props.scores[a] > props.scores[b]; });
  return order;
}

// Recall of one image averaged over the thresholds.
inline double image_recall(const AnnotatedImage& gt, const AnnotatedImage& props, int k,
                           std::span<const double> thresholds) {
  auto order = ranked_proposals(props);
  if (order.size() > static_cast<std::size_t>(k)) order.resize(static_cast<std::size_t>(k));
  const std::size_t ng = gt.boxes.size();
  double sum = 0.0;
  std::vector<char> matched(ng);
  for (double t : thresholds) {
    std::fill(matched.begin(), matched.end(), 0);
    std::size_t hits = 0;
    for (std::size_t p : order) {
      double best = -1.0;
      std::size_t arg = ng;
      for (std::size_t g = 0; g < ng; ++g) {
        if (matched[g]) continue;
        const double o = iou(props.boxes[p], gt.boxes[g]);
        if (o >= t && o > best) {
          best = o;
          arg = g;
        }
      }
      if (arg < ng) {
        matched[arg] = 1;
        ++hits;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(ng);
  }
  return sum / static_cast<double>(thresholds.size());
}

struct RecallBreakdown {
  double average = 0.0;
  std::vector<std::pair<std::string, double>> per_image;  // images with >= 1 gt box
};

namespace detail {

inline std::map<std::string, const AnnotatedImage*> by_image_id(std::span<const AnnotatedImage> images,
                                                                 const char* what) {
  std::map<std::string, const AnnotatedImage*> m;
  for (const auto& img : images)
    if (!m.emplace(img.image_id, &img).second)
      throw std::invalid_argument(std::string("duplicate image id '") + img.image_id + "' in " + what);
  return m;
}

}  // namespace detail

inline RecallBreakdown average_recall_breakdown(std::span<const AnnotatedImage> gt,
                                                std::span<const AnnotatedImage> props, int k,
                                                std::span<const double> thresholds = kCocoIouThresholds) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (thresholds.empty()) throw std::invalid_argument("need at least one IoU threshold");
  const auto gmap = detail::by_image_id(gt, "ground truth");
  const auto pmap = detail::by_image_id(props, "proposals");
  if (gmap.size() != pmap.size() ||
      !std::equal(gmap.begin(), gmap.end(), pmap.begin(), [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw std::invalid_argument("ground truth and proposals cover different image ids");

  RecallBreakdown out;
  double sum = 0.0;
  for (const auto& img : gt) {
    if (img.boxes.empty()) continue;
    const double r = image_recall(img, *pmap.at(img.image_id), k, thresholds);
    out.per_image.emplace_back(img.image_id, r);
    sum += r;
  }
  out.average = out.per_image.empty() ? 0.0 : sum / static_cast<double>(out.per_image.size());
  return out;
}

inline double average_recall(std::span<const AnnotatedImage> gt, std::span<const AnnotatedImage> props, int k,
                             std::span<const double> thresholds = kCocoIouThresholds) {
  return average_recall_breakdown(gt, props, k, thresholds).average;
}

// Fraction of annotations whose predicted label equals the assigned one.
// Annotations correspond by position within each image.
inline double pseudo_label_accuracy(std::span<const AnnotatedImage> predictions,
                                    std::span<const AnnotatedImage> assigned) {
  const auto amap = detail::by_image_id(assigned, "assigned labels");
  if (predictions.size() != assigned.size())
    throw std::invalid_argument("prediction and assignment sets cover different images");
  std::size_t total = 0, agree = 0;
  for (const auto& p : predictions) {
    auto it = amap.find(p.image_id);
    if (it == amap.end()) throw std::invalid_argument("image '" + p.image_id + "' missing from assignment");
    const auto& a = *it->second;
    if (a.labels.size() != p.labels.size())
      throw std::invalid_argument("image '" + p.image_id + "': annotation counts differ");
    for (std::size_t i = 0; i < p.labels.size(); ++i) agree += p.labels[i] == a.labels[i] ? 1 : 0;
    total += p.labels.size();
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

// Sum over clusters of the dominant true-class count, divided by N.
inline double cluster_purity(std::span<const int> labels, std::span<const int> true_classes) {
  if (labels.size() != true_classes.size()) throw std::invalid_argument("purity inputs differ in length");
  if (labels.empty()) return 1.0;
  std::map<int, std::map<int, std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[labels[i]][true_classes[i]];
  std::size_t dominant = 0;
  for (const auto& [cluster, hist] : counts) {
    std::size_t best = 0;
    for (const auto& [cls, c] : hist) best = std::max(best, c);
    dominant += best;
  }
  return static_cast<double>(dominant) / static_cast<double>(labels.size());
}

struct EvalReport {
  std::map<int, double> ar_at_k;
  std::optional<double> acc;
  std::optional<double> purity;
  std::vector<std::pair<std::string, double>> per_image_recall;
};

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json ar = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.ar_at_k) ar[std::to_string(k)] = v;
  j["ar_at_k"] = std::move(ar);
  j["acc"] = r.acc ? nlohmann::ordered_json(*r.acc) : nlohmann::ordered_json(nullptr);
  j["purity"] = r.purity ? nlohmann::ordered_json(*r.purity) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& [id, v] : r.per_image_recall) per.push_back({{"image_id", id}, {"recall", v}});
  j["per_image_recall"] = std::move(per);
  return j;
}

}  // namespace aptdet
