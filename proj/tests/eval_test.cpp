// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <gtest/gtest.h>

#include "aptdet/eval.hpp"
#include "test_support.hpp"

namespace aptdet {
namespace {

AnnotatedImage image(const std::string& id, std::vector<Box> boxes, std::vector<int> labels = {}) {
  if (labels.empty()) labels.assign(boxes.size(), 0);
  return {id, 100, 100, std::move(boxes), std::move(labels), {}};
}

TEST(AverageRecall, ProposalsEqualToGroundTruth) {
  std::mt19937_64 rng(1);
  std::vector<AnnotatedImage> gt;
  for (int i = 0; i < 10; ++i) gt.push_back(testing::random_annotated(rng, std::to_string(i), 5, false));
  EXPECT_DOUBLE_EQ(average_recall(gt, gt, 100), 1.0);
}

TEST(AverageRecall, NoProposalsIsZero) {
  const std::vector<AnnotatedImage> gt = {image("a", {{0, 0, 10, 10}})};
  const std::vector<AnnotatedImage> props = {image("a", {})};
  EXPECT_EQ(average_recall(gt, props, 100), 0.0);
}

TEST(AverageRecall, SingleOverlapCountsThreeThresholds) {
  // IoU exactly 0.6: hits at 0.5, 0.55, 0.6
  const std::vector<AnnotatedImage> gt = {image("a", {{0, 0, 10, 10}})};
  const std::vector<AnnotatedImage> props = {image("a", {{0, 0, 10, 6}})};
  EXPECT_DOUBLE_EQ(average_recall(gt, props, 100), 0.3);
}

TEST(AverageRecall, TopKUsesScoreOrder) {
  const std::vector<AnnotatedImage> gt = {image("a", {{0, 0, 10, 10}})};
  AnnotatedImage p = image("a", {{50, 50, 10, 10}, {0, 0, 10, 10}});
  p.scores = {0.9, 0.1};
  EXPECT_EQ(average_recall(gt, std::vector{p}, 1), 0.0);
  p.scores = {0.1, 0.9};
  EXPECT_EQ(average_recall(gt, std::vector{p}, 1), 1.0);
}

TEST(AverageRecall, ImagesWithoutGroundTruthAreSkipped) {
  const std::vector<AnnotatedImage> gt = {image("a", {{0, 0, 10, 10}}), image("b", {})};
  const std::vector<AnnotatedImage> props = {image("a", {{0, 0, 10, 10}}), image("b", {{1, 1, 5, 5}})};
  EXPECT_EQ(average_recall(gt, props, 100), 1.0);
}

TEST(AverageRecall, MonotoneUnderAppendingAndLabelBlind) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    AnnotatedImage g = testing::random_annotated(rng, "a", 4, false);
    AnnotatedImage p = testing::random_annotated(rng, "a", 4, false);
    p.width = g.width;
    p.height = g.height;
    const std::vector<AnnotatedImage> gt = {g};
    double prev = average_recall(gt, std::vector{p}, 1000);
    for (int extra = 0; extra < 5; ++extra) {
      const auto more = testing::random_annotated(rng, "a", 4, false);
      p.boxes.insert(p.boxes.end(), more.boxes.begin(), more.boxes.end());
      p.labels.insert(p.labels.end(), more.labels.begin(), more.labels.end());
      const double now = average_recall(gt, std::vector{p}, 1000);
      EXPECT_GE(now, prev);
      prev = now;
    }
    AnnotatedImage relabelled = p;
    for (auto& l : relabelled.labels) l = (l + 1) % 4;
    EXPECT_EQ(average_recall(gt, std::vector{relabelled}, 1000), prev);
  }
}

TEST(AverageRecall, MismatchedImageSetsRejected) {
  const std::vector<AnnotatedImage> gt = {image("a", {{0, 0, 10, 10}})};
  const std::vector<AnnotatedImage> props = {image("b", {})};
  EXPECT_THROW(average_recall(gt, props, 100), std::invalid_argument);
  EXPECT_THROW(average_recall(gt, gt, 0), std::invalid_argument);
}

TEST(PseudoLabelAccuracy, KnownValues) {
  const std::vector<AnnotatedImage> a = {image("x", {{0, 0, 1, 1}, {1, 1, 1, 1}}, {1, 2})};
  EXPECT_EQ(pseudo_label_accuracy(a, a), 1.0);
  const std::vector<AnnotatedImage> none = {image("x", {{0, 0, 1, 1}, {1, 1, 1, 1}}, {0, 0})};
  EXPECT_EQ(pseudo_label_accuracy(none, a), 0.0);
  const std::vector<AnnotatedImage> half = {image("x", {{0, 0, 1, 1}, {1, 1, 1, 1}}, {1, 0})};
  EXPECT_EQ(pseudo_label_accuracy(half, a), 0.5);
}

TEST(ClusterPurity, KnownValues) {
  EXPECT_EQ(cluster_purity(std::vector{0, 0, 1, 1}, std::vector{5, 5, 7, 7}), 1.0);
  EXPECT_EQ(cluster_purity(std::vector{0, 0, 0, 0}, std::vector{5, 5, 7, 7}), 0.5);
  std::vector<int> labels(10, 0), truth(10, 1);
  truth[0] = 2;
  EXPECT_DOUBLE_EQ(cluster_purity(labels, truth), 0.9);
}

TEST(EvalReport, JsonShape) {
  EvalReport r;
  r.ar_at_k[100] = 0.5;
  r.per_image_recall = {{"a", 0.5}};
  const auto j = to_json(r);
  EXPECT_EQ(j["ar_at_k"]["100"], 0.5);
  EXPECT_TRUE(j["acc"].is_null());
  EXPECT_EQ(j["per_image_recall"][0]["image_id"], "a");
}

}  // namespace
}  // namespace aptdet
