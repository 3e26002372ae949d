// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration shared by the command-line tool and the tests:
// configuration, unsupervised proposal extraction into the first training
// set, and loaders for detector predictions.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptdet/errors.hpp"
#include "aptdet/kmeans.hpp"
#include "aptdet/match_loss.hpp"
#include "aptdet/parallel.hpp"
#include "aptdet/pseudo_labels.hpp"
#include "aptdet/regions.hpp"
#include "aptdet/self_train.hpp"
#include "aptdet/spectral.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

struct PipelineConfig {
  LocalClusterConfig local;
  FilterConfig filter;
  int classes = kDefaultPseudoClasses;
  std::uint64_t seed = 0;
  SelfTrainConfig self_train;
  LossWeights loss;
  int threads = 1;
};

inline void check(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid configuration: " + m); };
  if (c.local.k_set.empty()) fail("k_set must not be empty");
  for (int k : c.local.k_set)
    if (k < 1) fail("every K must be >= 1");
  if (c.local.knn < 1) fail("knn must be >= 1");
  if (c.local.max_pixels < 1) fail("max_pixels must be >= 1");
  for (double t : {c.filter.iou_merge, c.filter.sim_merge, c.filter.min_rel_area})
    if (!(t >= 0.0 && t <= 1.0)) fail("filter thresholds must lie in [0, 1]");
  if (c.classes < 1) fail("classes must be >= 1");
  if (c.self_train.top_k < 1) fail("top_k must be >= 1");
  if (!(c.self_train.iou_max > 0.0 && c.self_train.iou_max <= 1.0)) fail("iou_max must lie in (0, 1]");
  if (c.loss.l1 < 0 || c.loss.giou < 0 || c.loss.no_object < 0) fail("loss weights must be >= 0");
  if (c.threads < 1) fail("threads must be >= 1");
}

inline std::string to_string(MatchClassTerm t) {
  return t == MatchClassTerm::Probability ? "prob" : "logprob";
}

inline MatchClassTerm parse_match_class_term(const std::string& s) {
  if (s == "prob") return MatchClassTerm::Probability;
  if (s == "logprob") return MatchClassTerm::LogProbability;
  throw std::invalid_argument("match class term must be 'prob' or 'logprob', got '" + s + "'");
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  return {{"k_set", c.local.k_set},
          {"levels", c.local.level_set},
          {"knn", c.local.knn},
          {"max_pixels", c.local.max_pixels},
          {"restarts", c.local.restarts},
          {"iou_merge", c.filter.iou_merge},
          {"sim_merge", c.filter.sim_merge},
          {"min_rel_area", c.filter.min_rel_area},
          {"classes", c.classes},
          {"seed", c.seed},
          {"top_k", c.self_train.top_k},
          {"iou_max", c.self_train.iou_max},
          {"l1_weight", c.loss.l1},
          {"giou_weight", c.loss.giou},
          {"noobj_weight", c.loss.no_object},
          {"match_class_term", to_string(c.loss.match_class_term)}};
}

// Overrides fields present in `j`; unknown keys are rejected.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("configuration must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "k_set") c.local.k_set = v.get<std::vector<int>>();
      else if (key == "levels") c.local.level_set = v.get<std::vector<std::uint32_t>>();
      else if (key == "knn") c.local.knn = v.get<int>();
      else if (key == "max_pixels") c.local.max_pixels = v.get<std::size_t>();
      else if (key == "restarts") c.local.restarts = v.get<int>();
      else if (key == "iou_merge") c.filter.iou_merge = v.get<double>();
      else if (key == "sim_merge") c.filter.sim_merge = v.get<double>();
      else if (key == "min_rel_area") c.filter.min_rel_area = v.get<double>();
      else if (key == "classes") c.classes = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "top_k") c.self_train.top_k = v.get<int>();
      else if (key == "iou_max") c.self_train.iou_max = v.get<double>();
      else if (key == "l1_weight") c.loss.l1 = v.get<double>();
      else if (key == "giou_weight") c.loss.giou = v.get<double>();
      else if (key == "noobj_weight") c.loss.no_object = v.get<double>();
      else if (key == "match_class_term") c.loss.match_class_term = parse_match_class_term(v.get<std::string>());
      else if (key == "threads") c.threads = v.get<int>();
      else throw FormatError("unknown configuration key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("configuration value has the wrong type: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  apply_json(base, detail::parse_json(detail::read_file(path), path.string()));
  return base;
}

// ---------------------------------------------------------------------------
// Proposal extraction

struct ImageExtraction {
  ImageProposals proposals;  // descriptors L2-normalized
  std::size_t masks = 0;
  std::size_t raw_regions = 0;
};

inline ImageExtraction extract_image(const FeatureStack& stack, int width, int height, const PipelineConfig& cfg) {
  LocalClusterConfig local = cfg.local;
  local.seed = cfg.seed;
  local.threads = 1;  // images are the unit of parallelism
  const auto masks = cluster_multi(stack, local);

  ImageExtraction out;
  out.masks = masks.size();
  out.proposals.image_id = stack.image_id;
  out.proposals.width = width;
  out.proposals.height = height;
  std::vector<Proposal> raw;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    for (const Region& r : connected_components(masks[m], static_cast<int>(m))) {
      ++out.raw_regions;
      Proposal p = region_to_proposal(r, stack.last_level());
      if (descriptor_norm(p.descriptor) > 0.0) raw.push_back(std::move(p));
    }
  }
  out.proposals.proposals = filter_proposals(std::move(raw), cfg.filter);
  for (auto& p : out.proposals.proposals) {
    const double n = descriptor_norm(p.descriptor);
    for (double& v : p.descriptor) v /= n;
  }
  return out;
}

struct ExtractStats {
  std::size_t images = 0;
  std::size_t masks = 0;
  std::size_t raw_regions = 0;
  std::size_t proposals = 0;

  double mean_proposals() const { return images ? static_cast<double>(proposals) / images : 0.0; }
};

struct ExtractResult {
  std::vector<AnnotatedImage> training_set;
  PseudoLabelModel model;
  ExtractStats stats;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

// Local clustering, regions and filtering per image, then one global
// k-means over every descriptor to assign pseudo-classes.
inline ExtractResult run_extract(std::span<const FeatureStack> stacks, std::span<const ImageSize> sizes,
                                 const PipelineConfig& cfg) {
  check(cfg);
  if (stacks.size() != sizes.size()) throw std::invalid_argument("one image size per stack required");
  std::vector<ImageExtraction> per(stacks.size());
  parallel_for(stacks.size(), cfg.threads, [&](std::size_t i) {
    per[i] = extract_image(stacks[i], sizes[i].width, sizes[i].height, cfg);
  });

  ExtractResult out;
  std::vector<ImageProposals> images;
  images.reserve(per.size());
  for (auto& e : per) {
    ++out.stats.images;
    out.stats.masks += e.masks;
    out.stats.raw_regions += e.raw_regions;
    out.stats.proposals += e.proposals.proposals.size();
    images.push_back(std::move(e.proposals));
  }
  const RowMatrix features = descriptor_matrix(images);
  if (features.rows() < cfg.classes)
    throw InvariantError("only " + std::to_string(features.rows()) + " proposals for " +
                         std::to_string(cfg.classes) + " pseudo-classes; lower --classes");
  KMeansOptions opt;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;
  out.model = kmeans_fit(features, cfg.classes, opt);
  out.training_set = build_training_set(images, out.model, cfg.threads);
  return out;
}

// ---------------------------------------------------------------------------
// Detector predictions: either a COCO results array (needs a reference
// annotation file for the image table) or an annotation-schema object.

struct PredictionSet {
  std::vector<ImagePredictions> images;  // reference image order
  int num_classes = 0;
};

inline PredictionSet load_predictions(const nlohmann::json& doc, const nlohmann::json* reference) {
  PredictionSet out;
  if (doc.is_object()) {
    const AnnotationSet set = annotations_from_json(doc);
    out.num_classes = set.num_classes;
    for (const auto& img : set.images) {
      if (!img.boxes.empty() && img.scores.empty())
        throw FormatError("image '" + img.image_id + "': predictions need scores");
      out.images.push_back({img.image_id, img.width, img.height, img.boxes, img.labels, img.scores});
    }
    return out;
  }
  if (!doc.is_array()) throw FormatError("predictions must be a results array or an annotation object");
  if (!reference) throw FormatError("a results array needs a reference annotation file for image sizes");
  const AnnotationSet ref = annotations_from_json(*reference);
  const ImageIndex index = parse_image_table(*reference);
  out.num_classes = ref.num_classes;
  for (const auto& img : index.images) out.images.push_back({img.image_id, img.width, img.height, {}, {}, {}});
  for (const auto& e : doc) {
    const long long id = detail::require_integer(e, "image_id", "result");
    auto it = index.by_id.find(id);
    if (it == index.by_id.end()) throw FormatError("result references unknown image_id " + std::to_string(id));
    const long long cat = detail::require_integer(e, "category_id", "result");
    if (cat < 0 || cat >= out.num_classes) throw InvariantError("result category_id out of range");
    auto& img = out.images[it->second];
    img.boxes.push_back(detail::parse_bbox(detail::require(e, "bbox", "result"), "result"));
    img.labels.push_back(static_cast<int>(cat));
    img.scores.push_back(detail::require_number(e, "score", "result"));
  }
  for (const auto& img : out.images) {
    AnnotatedImage probe{img.image_id, img.width, img.height, img.boxes, img.labels, img.scores};
    validate(probe, out.num_classes);
  }
  return out;
}

inline std::vector<AnnotatedImage> as_annotated(const PredictionSet& set) {
  std::vector<AnnotatedImage> out;
  for (const auto& p : set.images) out.push_back({p.image_id, p.width, p.height, p.boxes, p.labels, p.scores});
  return out;
}

}  // namespace aptdet
