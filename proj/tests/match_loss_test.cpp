// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "aptdet/match_loss.hpp"
#include "aptdet/oracle.hpp"
#include "test_support.hpp"

namespace aptdet {
namespace {

TEST(BoxOverlap, KnownValues) {
  const Box a{0, 0, 2, 2}, b{1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(giou(a, b), 1.0 / 7.0 - 2.0 / 9.0);
  EXPECT_DOUBLE_EQ(giou(Box{0, 0, 1, 1}, Box{2, 0, 1, 1}), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(giou(a, a), 1.0);
}

TEST(BoxOverlap, GiouBoundedByIouAndSymmetric) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Box a = testing::random_box(rng), b = testing::random_box(rng);
    EXPECT_LE(giou(a, b), iou(a, b) + 1e-15);
    EXPECT_GE(giou(a, b), -1.0);
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_DOUBLE_EQ(giou(a, b), giou(b, a));
  }
}

// ---------------------------------------------------------------------------

TEST(Hungarian, SmallCases) {
  EXPECT_TRUE(hungarian_match({}).empty());
  EXPECT_EQ(hungarian_match({{1, 0}, {0, 1}}), (std::vector<int>{1, 0}));
  EXPECT_EQ(hungarian_match({{0, 5, 5}, {5, 0, 5}, {5, 5, 0}}), (std::vector<int>{0, 1, 2}));
}

TEST(Hungarian, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    CostMatrix c(5, std::vector<double>(5));
    for (auto& row : c)
      for (auto& v : row) v = u(rng);
    const auto a = hungarian_match(c);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_NEAR(assignment_cost(c, a), brute_force_match(c).cost, 1e-9);
  }
}

TEST(Hungarian, RejectsBadInput) {
  EXPECT_THROW(hungarian_match({{1, 2}}), std::invalid_argument);
  EXPECT_THROW(hungarian_match({{1, std::numeric_limits<double>::quiet_NaN()}, {0, 0}}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Reference loss written out directly from the definitions.

double ref_giou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double ex = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ey = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  return inter / uni - (ex * ey - uni) / (ex * ey);
}

double ref_logp(const std::vector<double>& logits, int cls) {
  double s = 0.0;
  for (double l : logits) s += std::exp(l);
  return logits[static_cast<std::size_t>(cls)] - std::log(s);
}

// Total loss when prediction q takes slot perm[q]; slots >= gt count are empty.
double ref_loss(const std::vector<Box>& gt, const std::vector<int>& cls, const std::vector<Prediction>& preds,
                const std::vector<int>& perm, const LossWeights& w) {
  const int none = static_cast<int>(preds[0].logits.size()) - 1;
  double total = 0.0;
  for (std::size_t q = 0; q < preds.size(); ++q) {
    const auto j = static_cast<std::size_t>(perm[q]);
    if (j < gt.size()) {
      const Box& g = gt[j];
      const Box& p = preds[q].box;
      const double l1 = std::abs((g.x + g.w / 2) - (p.x + p.w / 2)) + std::abs((g.y + g.h / 2) - (p.y + p.h / 2)) +
                        std::abs(g.w - p.w) + std::abs(g.h - p.h);
      total += -ref_logp(preds[q].logits, cls[j]) + w.l1 * l1 + w.giou * (1.0 - ref_giou(g, p));
    } else {
      total += -w.no_object * ref_logp(preds[q].logits, none);
    }
  }
  return total;
}

struct Instance {
  AnnotatedImage gt;
  std::vector<Box> gt_norm;
  std::vector<Prediction> preds;
};

Instance random_instance(std::mt19937_64& rng, int q, int classes) {
  std::normal_distribution<double> g(0.0, 2.0);
  Instance in;
  in.gt = {"x", 200, 100, {}, {}, {}};
  const int n = static_cast<int>(rng() % static_cast<unsigned>(q + 1));
  for (int i = 0; i < n; ++i) {
    const Box b = testing::random_box(rng);
    in.gt_norm.push_back(b);
    in.gt.boxes.push_back({b.x * 200, b.y * 100, b.w * 200, b.h * 100});
    in.gt.labels.push_back(static_cast<int>(rng() % static_cast<unsigned>(classes)));
  }
  for (int i = 0; i < q; ++i) {
    Prediction p{testing::random_box(rng), std::vector<double>(static_cast<std::size_t>(classes + 1))};
    for (auto& l : p.logits) l = g(rng);
    in.preds.push_back(p);
  }
  return in;
}

TEST(DetectionLoss, PerfectPredictionsCostNothing) {
  AnnotatedImage gt{"x", 100, 100, {{10, 10, 20, 30}, {50, 50, 40, 40}}, {0, 2}, {}};
  std::vector<Prediction> preds = {
      {{0.5, 0.5, 0.4, 0.4}, {-30, -30, 30, -30}},
      {{0.1, 0.1, 0.2, 0.3}, {30, -30, -30, -30}},
      {{0.0, 0.0, 0.1, 0.1}, {-30, -30, -30, 30}},
  };
  const auto r = detection_loss(gt, preds);
  EXPECT_EQ(r.assignment, (std::vector<int>{1, 0, 2}));
  EXPECT_NEAR(r.box_l1, 0.0, 1e-12);
  EXPECT_NEAR(r.box_giou, 0.0, 1e-12);
  EXPECT_LT(r.class_loss, 1e-3);
}

TEST(DetectionLoss, EmptyGroundTruthIsNoObjectLoss) {
  std::mt19937_64 rng(3);
  Instance in = random_instance(rng, 4, 3);
  in.gt.boxes.clear();
  in.gt.labels.clear();
  double sum = 0.0;
  for (const auto& p : in.preds) sum += -ref_logp(p.logits, 3);
  for (double w : {1.0, 0.1}) {
    LossWeights lw;
    lw.no_object = w;
    const auto r = detection_loss(in.gt, in.preds, lw);
    EXPECT_NEAR(r.total_loss, w * sum, 1e-9);
    EXPECT_EQ(r.box_l1, 0.0);
    EXPECT_EQ(r.box_giou, 0.0);
  }
}

TEST(DetectionLoss, MinimumOverAllPermutationsInSelfConsistentMode) {
  std::mt19937_64 rng(4);
  LossWeights w;
  w.match_class_term = MatchClassTerm::LogProbability;
  w.no_object = 1.0;
  for (int t = 0; t < 30; ++t) {
    const Instance in = random_instance(rng, 6, 4);
    const auto r = detection_loss(in.gt, in.preds, w);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do best = std::min(best, ref_loss(in.gt_norm, in.gt.labels, in.preds, perm, w));
    while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(r.total_loss, best, 1e-9);
    EXPECT_NEAR(r.matching_cost, r.total_loss, 1e-9);
    EXPECT_NEAR(r.total_loss, ref_loss(in.gt_norm, in.gt.labels, in.preds, r.assignment, w), 1e-9);
  }
}

TEST(DetectionLoss, DefaultModeLossFollowsMatchedAssignment) {
  std::mt19937_64 rng(5);
  const LossWeights w;
  for (int t = 0; t < 50; ++t) {
    const Instance in = random_instance(rng, 5, 3);
    const auto r = detection_loss(in.gt, in.preds, w);
    EXPECT_NEAR(r.total_loss, ref_loss(in.gt_norm, in.gt.labels, in.preds, r.assignment, w), 1e-9);
    EXPECT_NEAR(r.total_loss, r.class_loss + r.box_l1 + r.box_giou, 1e-12);
  }
}

TEST(DetectionLoss, InvariantToPredictionOrder) {
  std::mt19937_64 rng(6);
  LossWeights w;
  w.match_class_term = MatchClassTerm::LogProbability;
  w.no_object = 1.0;
  for (int t = 0; t < 50; ++t) {
    Instance in = random_instance(rng, 5, 3);
    const double before = detection_loss(in.gt, in.preds, w).total_loss;
    std::shuffle(in.preds.begin(), in.preds.end(), rng);
    EXPECT_NEAR(detection_loss(in.gt, in.preds, w).total_loss, before, 1e-9);
  }
}

TEST(DetectionLoss, TooFewSlotsRejected) {
  AnnotatedImage gt{"x", 10, 10, {{0, 0, 1, 1}, {2, 2, 1, 1}}, {0, 0}, {}};
  std::vector<Prediction> preds = {{{0, 0, 0.1, 0.1}, {0.0, 0.0}}};
  EXPECT_THROW(detection_loss(gt, preds), std::invalid_argument);
}

}  // namespace
}  // namespace aptdet
