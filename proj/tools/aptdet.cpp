// SPDX-License-Identifier: Apache-2.0
//
// aptdet: command-line front end for the unsupervised annotation pipeline.
//
// Exit codes: 0 success, 1 data error, 2 usage or schema error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "aptdet/aptdet.hpp"
#include "aptdet/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag values land here; only flags the user actually passed override the
// defaults and the --config file.
struct Flags {
  std::string config;
  bool json = false;
  int threads = 1;
  std::uint64_t seed = 0;
  std::vector<int> k_set;
  std::vector<std::uint32_t> levels;
  int knn = 0;
  std::size_t max_pixels = 0;
  double iou_merge = 0, sim_merge = 0, min_rel_area = 0;
  int classes = 0;
  int top_k = 0;
  double iou_max = 0;
  double l1 = 0, giou = 0, noobj = 0;
  std::string match_term;
};

struct Options {
  CLI::Option* threads = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* k_set = nullptr;
  CLI::Option* levels = nullptr;
  CLI::Option* knn = nullptr;
  CLI::Option* max_pixels = nullptr;
  CLI::Option* iou_merge = nullptr;
  CLI::Option* sim_merge = nullptr;
  CLI::Option* min_rel_area = nullptr;
  CLI::Option* classes = nullptr;
  CLI::Option* top_k = nullptr;
  CLI::Option* iou_max = nullptr;
  CLI::Option* l1 = nullptr;
  CLI::Option* giou = nullptr;
  CLI::Option* noobj = nullptr;
  CLI::Option* match_term = nullptr;
};

bool given(const CLI::Option* o) { return o && o->count() > 0; }

aptdet::PipelineConfig resolve_config(const Flags& f, const Options& o) {
  aptdet::PipelineConfig cfg;
  if (!f.config.empty()) cfg = aptdet::load_config(f.config);
  if (given(o.threads)) cfg.threads = f.threads;
  if (given(o.seed)) cfg.seed = f.seed;
  if (given(o.k_set)) cfg.local.k_set = f.k_set;
  if (given(o.levels)) cfg.local.level_set = f.levels;
  if (given(o.knn)) cfg.local.knn = f.knn;
  if (given(o.max_pixels)) cfg.local.max_pixels = f.max_pixels;
  if (given(o.iou_merge)) cfg.filter.iou_merge = f.iou_merge;
  if (given(o.sim_merge)) cfg.filter.sim_merge = f.sim_merge;
  if (given(o.min_rel_area)) cfg.filter.min_rel_area = f.min_rel_area;
  if (given(o.classes)) cfg.classes = f.classes;
  if (given(o.top_k)) cfg.self_train.top_k = f.top_k;
  if (given(o.iou_max)) cfg.self_train.iou_max = f.iou_max;
  if (given(o.l1)) cfg.loss.l1 = f.l1;
  if (given(o.giou)) cfg.loss.giou = f.giou;
  if (given(o.noobj)) cfg.loss.no_object = f.noobj;
  try {
    if (given(o.match_term)) cfg.loss.match_class_term = aptdet::parse_match_class_term(f.match_term);
    aptdet::check(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void add_common(CLI::App* cmd, Flags& f, Options& o) {
  cmd->add_option("--config", f.config, "JSON configuration file; explicit flags take precedence")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--json", f.json, "Print machine-readable results to stdout");
  o.threads = cmd->add_option("--threads", f.threads, "Worker threads (output does not depend on this)");
}

nlohmann::json read_json(const fs::path& p) {
  return aptdet::detail::parse_json(aptdet::detail::read_file(p), p.string());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw aptdet::IoError("no such file: '" + p.string() + "'");
}

void emit(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

// --------------------------------------------------------------------------
// extract

struct ExtractArgs {
  std::string feature_dir;
  std::string out;
  std::string model_out;
  std::string image_size;
};

std::optional<aptdet::ImageSize> parse_size(const std::string& s) {
  if (s.empty()) return std::nullopt;
  int w = 0, h = 0;
  char sep = 0;
  std::istringstream in(s);
  if (!(in >> w >> sep >> h) || (sep != 'x' && sep != 'X' && sep != ',') || w <= 0 || h <= 0)
    throw UsageError("--image-size expects WxH, got '" + s + "'");
  return aptdet::ImageSize{w, h};
}

// Optional <dir>/manifest.json: {"images": [{"image_id", "width", "height"}, ...]}.
std::map<std::string, aptdet::ImageSize> read_manifest(const fs::path& dir) {
  std::map<std::string, aptdet::ImageSize> sizes;
  const fs::path p = dir / "manifest.json";
  if (!fs::is_regular_file(p)) return sizes;
  const auto doc = read_json(p);
  if (!doc.is_object() || !doc.contains("images")) return sizes;
  for (const auto& e : doc.at("images")) {
    if (!e.contains("image_id") || !e.contains("width") || !e.contains("height")) continue;
    sizes[e.at("image_id").get<std::string>()] = {e.at("width").get<int>(), e.at("height").get<int>()};
  }
  return sizes;
}

int cmd_extract(const ExtractArgs& a, const aptdet::PipelineConfig& cfg, bool json) {
  if (!fs::is_directory(a.feature_dir)) throw aptdet::IoError("not a directory: '" + a.feature_dir + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.feature_dir))
    if (e.is_regular_file() && e.path().extension() == ".fms") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no feature stacks found in '" << a.feature_dir << "'\n";
    return kExitData;
  }
  const auto manifest = read_manifest(a.feature_dir);
  const auto fixed = parse_size(a.image_size);

  std::vector<aptdet::FeatureStack> stacks;
  std::vector<aptdet::ImageSize> sizes;
  int failed = 0;
  for (const auto& f : files) {
    try {
      auto s = aptdet::read_feature_stack(f);
      aptdet::ImageSize size{static_cast<int>(s.levels.front().width), static_cast<int>(s.levels.front().height)};
      if (auto it = manifest.find(s.image_id); it != manifest.end())
        size = it->second;
      else if (fixed)
        size = *fixed;
      stacks.push_back(std::move(s));
      sizes.push_back(size);
    } catch (const aptdet::Error& e) {
      std::cerr << f.string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  if (stacks.empty()) return kExitData;

  std::cerr << "clustering " << stacks.size() << " images\n";
  const auto result = aptdet::run_extract(stacks, sizes, cfg);
  aptdet::write_annotations(result.training_set, cfg.classes, a.out);
  if (!a.model_out.empty()) aptdet::write_model(result.model, a.model_out);

  const auto& st = result.stats;
  std::cerr << "images: " << st.images << "\n"
            << "masks: " << st.masks << "\n"
            << "raw regions: " << st.raw_regions << "\n"
            << "filtered proposals: " << st.proposals << "\n"
            << "mean proposals/image: " << st.mean_proposals() << "\n";
  if (json)
    emit({{"images", st.images},
          {"masks", st.masks},
          {"raw_regions", st.raw_regions},
          {"filtered_proposals", st.proposals},
          {"mean_proposals_per_image", st.mean_proposals()},
          {"inertia", result.model.inertia},
          {"failed_files", failed},
          {"config", aptdet::to_json(cfg)}});
  return failed > 0 ? kExitData : kExitOk;
}

// --------------------------------------------------------------------------
// selftrain-filter

struct SelfTrainArgs {
  std::string predictions;
  std::string out;
  std::string images;
};

int cmd_selftrain(const SelfTrainArgs& a, const aptdet::PipelineConfig& cfg, bool json) {
  require_file(a.predictions);
  const auto doc = read_json(a.predictions);
  std::optional<nlohmann::json> ref;
  if (!a.images.empty()) {
    require_file(a.images);
    ref = read_json(a.images);
  }
  const auto preds = aptdet::load_predictions(doc, ref ? &*ref : nullptr);
  const auto next = aptdet::build_next_training_set(preds.images, cfg.self_train);
  aptdet::write_annotations(next, preds.num_classes, a.out);

  std::size_t before = 0, after = 0;
  for (const auto& p : preds.images) before += p.boxes.size();
  for (const auto& n : next) after += n.boxes.size();
  std::cerr << "images: " << next.size() << "\nboxes in: " << before << "\nboxes kept: " << after << "\n";
  if (json)
    emit({{"images", next.size()},
          {"boxes_in", before},
          {"boxes_kept", after},
          {"top_k", cfg.self_train.top_k},
          {"iou_max", cfg.self_train.iou_max}});
  return kExitOk;
}

// --------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string gt;
  std::string proposals;
  int k = 100;
  bool acc = false;
  std::string report;
};

int cmd_eval(const EvalArgs& a, bool json) {
  require_file(a.gt);
  require_file(a.proposals);
  if (a.k < 1) throw UsageError("--k must be >= 1");
  const auto gt_doc = read_json(a.gt);
  const auto gt = aptdet::annotations_from_json(gt_doc);
  const auto prop_doc = read_json(a.proposals);
  std::vector<aptdet::AnnotatedImage> props;
  if (prop_doc.is_array())
    props = aptdet::as_annotated(aptdet::load_predictions(prop_doc, &gt_doc));
  else
    props = aptdet::annotations_from_json(prop_doc).images;

  aptdet::EvalReport report;
  const auto ar = aptdet::average_recall_breakdown(gt.images, props, a.k);
  report.ar_at_k[a.k] = ar.average;
  report.per_image_recall = ar.per_image;
  if (a.acc) report.acc = aptdet::pseudo_label_accuracy(props, gt.images);

  const auto j = aptdet::to_json(report);
  if (!a.report.empty()) aptdet::detail::write_file(a.report, j.dump(2) + "\n");
  if (json) {
    emit(j);
  } else {
    std::printf("AR@%d: %.6f\n", a.k, ar.average);
    if (report.acc) std::printf("ACC: %.6f\n", *report.acc);
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// loss
//
// The logits sidecar is an FMS stack with one level per ground-truth image,
// level index = the image's numeric COCO id, d = C+1, H = Q, W = 1. The
// predictions file lists each image's Q boxes in query order.

struct LossArgs {
  std::string gt;
  std::string predictions;
  std::string logits;
  bool oracle = false;
};

int cmd_loss(const LossArgs& a, const aptdet::PipelineConfig& cfg, bool json) {
  require_file(a.gt);
  require_file(a.predictions);
  require_file(a.logits);
  const auto gt_doc = read_json(a.gt);
  const auto gt = aptdet::annotations_from_json(gt_doc);
  const auto index = aptdet::parse_image_table(gt_doc);
  const auto preds = aptdet::load_predictions(read_json(a.predictions), &gt_doc);
  const auto logits = aptdet::read_feature_stack(a.logits);

  std::map<std::string, long long> numeric_id;
  for (const auto& [id, pos] : index.by_id) numeric_id[index.images[pos].image_id] = id;
  std::map<std::string, const aptdet::ImagePredictions*> pred_by_id;
  for (const auto& p : preds.images) pred_by_id[p.image_id] = &p;

  double cls = 0, l1 = 0, gi = 0, total = 0, match = 0;
  std::size_t checked = 0, skipped = 0, mismatches = 0;
  for (const auto& img : gt.images) {
    const auto id = static_cast<std::uint32_t>(numeric_id.at(img.image_id));
    const aptdet::FeatureMap* lvl = logits.find_level(id);
    if (!lvl) throw aptdet::FormatError("logits file has no level for image id " + std::to_string(id));
    if (static_cast<int>(lvl->channels) - 1 != gt.num_classes)
      throw aptdet::FormatError("logits carry " + std::to_string(lvl->channels - 1) +
                                " classes but the ground truth declares " + std::to_string(gt.num_classes));
    if (lvl->width != 1) throw aptdet::FormatError("logits levels must have width 1");
    const auto& p = *pred_by_id.at(img.image_id);
    if (p.boxes.size() != lvl->height)
      throw aptdet::FormatError("image '" + img.image_id + "': " + std::to_string(p.boxes.size()) +
                                " predicted boxes but " + std::to_string(lvl->height) + " logit rows");
    std::vector<aptdet::Prediction> q(p.boxes.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i].box = aptdet::to_normalized(p.boxes[i], p.width, p.height);
      q[i].logits.resize(lvl->channels);
      for (std::size_t c = 0; c < lvl->channels; ++c) q[i].logits[c] = lvl->at(c, i, 0);
    }
    const auto r = aptdet::detection_loss(img, q, cfg.loss);
    cls += r.class_loss;
    l1 += r.box_l1;
    gi += r.box_giou;
    total += r.total_loss;
    match += r.matching_cost;
    if (a.oracle) {
      if (q.size() > 6) {
        ++skipped;
      } else {
        const auto t = aptdet::pad_targets(img, q);
        const auto best = aptdet::brute_force_match(aptdet::matching_cost_matrix(t, q, cfg.loss));
        ++checked;
        if (std::abs(best.cost - r.matching_cost) > 1e-9 * std::max(1.0, std::abs(best.cost))) {
          ++mismatches;
          std::cerr << "oracle mismatch on '" << img.image_id << "': hungarian " << r.matching_cost
                    << " vs brute force " << best.cost << "\n";
        }
      }
    }
  }
  const double n = gt.images.empty() ? 1.0 : static_cast<double>(gt.images.size());
  ordered_json j = {{"images", gt.images.size()},
                    {"class_loss", cls / n},
                    {"box_l1", l1 / n},
                    {"box_giou", gi / n},
                    {"total_loss", total / n},
                    {"matching_cost", match / n}};
  if (a.oracle) j["oracle"] = {{"checked", checked}, {"skipped", skipped}, {"mismatches", mismatches}};
  if (json) {
    emit(j);
  } else {
    std::printf("class_loss: %.6f\nbox_l1: %.6f\nbox_giou: %.6f\ntotal_loss: %.6f\n", cls / n, l1 / n, gi / n,
                total / n);
    if (a.oracle)
      std::printf("oracle: %zu checked, %zu skipped, %zu mismatches\n", checked, skipped, mismatches);
  }
  return mismatches > 0 ? kExitData : kExitOk;
}

// --------------------------------------------------------------------------
// kmeans fit / assign: rows are the pixel vectors of the deepest level.

aptdet::RowMatrix pixel_rows(const aptdet::FeatureStack& s) {
  const auto& m = s.last_level();
  aptdet::RowMatrix x(static_cast<Eigen::Index>(m.pixels()), m.channels);
  for (std::size_t c = 0; c < m.channels; ++c)
    for (std::size_t p = 0; p < m.pixels(); ++p)
      x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) = m.data[c * m.pixels() + p];
  return x;
}

struct KMeansArgs {
  std::string features;
  std::string model;
  std::string out;
  int max_iter = 300;
  double tol = 1e-4;
  int restarts = 1;
};

int cmd_kmeans_fit(const KMeansArgs& a, const aptdet::PipelineConfig& cfg, bool json) {
  require_file(a.features);
  const auto x = pixel_rows(aptdet::read_feature_stack(a.features));
  aptdet::KMeansOptions opt;
  opt.seed = cfg.seed;
  opt.max_iter = a.max_iter;
  opt.tol = a.tol;
  opt.restarts = a.restarts;
  opt.threads = cfg.threads;
  aptdet::KMeansTrace trace;
  const auto model = aptdet::kmeans_fit(x, cfg.classes, opt, &trace);
  aptdet::write_model(model, a.model);
  std::cerr << "rows: " << x.rows() << " clusters: " << cfg.classes << " iterations: " << trace.iterations
            << " inertia: " << model.inertia << "\n";
  if (json)
    emit({{"rows", x.rows()},
          {"clusters", cfg.classes},
          {"dim", x.cols()},
          {"iterations", trace.iterations},
          {"inertia", model.inertia}});
  return kExitOk;
}

int cmd_kmeans_assign(const KMeansArgs& a, const aptdet::PipelineConfig& cfg) {
  require_file(a.model);
  require_file(a.features);
  const auto model = aptdet::read_model(a.model);
  const auto labels = aptdet::kmeans_assign(model, pixel_rows(aptdet::read_feature_stack(a.features)), cfg.threads);
  const std::string text = ordered_json(labels).dump() + "\n";
  if (a.out.empty())
    std::cout << text;
  else
    aptdet::detail::write_file(a.out, text);
  return kExitOk;
}

// --------------------------------------------------------------------------
// inspect

int cmd_inspect(const std::string& path, bool json) {
  require_file(path);
  const auto s = aptdet::read_feature_stack(path);
  ordered_json levels = ordered_json::array();
  for (const auto& m : s.levels)
    levels.push_back({{"level", m.level}, {"channels", m.channels}, {"height", m.height}, {"width", m.width}});
  if (json) {
    emit({{"image_id", s.image_id}, {"bytes", fs::file_size(path)}, {"levels", levels}});
  } else {
    std::printf("image_id: %s\nlevels: %zu\n", s.image_id.c_str(), s.levels.size());
    for (const auto& m : s.levels)
      std::printf("  l=%u d=%u H=%u W=%u\n", m.level, m.channels, m.height, m.width);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised object proposals, pseudo-labels and self-training filters"};
  app.require_subcommand(1);
  Flags f;

  auto* extract = app.add_subcommand("extract", "Feature stacks -> pseudo-labelled training set");
  ExtractArgs ea;
  Options eo;
  extract->add_option("feature_dir", ea.feature_dir, "Directory of .fms files")->required();
  extract->add_option("out", ea.out, "Output annotation JSON")->required();
  add_common(extract, f, eo);
  eo.seed = extract->add_option("--seed", f.seed, "Random seed");
  eo.k_set = extract->add_option("--k-set", f.k_set, "Cluster counts for local clustering")->delimiter(',');
  eo.levels = extract->add_option("--levels", f.levels, "Level indices to cluster")->delimiter(',');
  eo.knn = extract->add_option("--knn", f.knn, "Neighbours in the affinity graph");
  eo.max_pixels = extract->add_option("--max-pixels", f.max_pixels, "Pixel cap before downsampling");
  eo.iou_merge = extract->add_option("--iou-merge", f.iou_merge, "IoU at which proposals merge");
  eo.sim_merge = extract->add_option("--sim-merge", f.sim_merge, "Descriptor cosine at which overlapping proposals merge");
  eo.min_rel_area = extract->add_option("--min-rel-area", f.min_rel_area, "Minimum normalized box area");
  eo.classes = extract->add_option("--classes", f.classes, "Number of pseudo-classes");
  extract->add_option("--image-size", ea.image_size, "WxH used when no manifest.json entry exists");
  extract->add_option("--model-out", ea.model_out, "Also write the pseudo-label model (PLM1)");

  auto* selftrain = app.add_subcommand("selftrain-filter", "Detector predictions -> next training set");
  SelfTrainArgs sa;
  Options so;
  selftrain->add_option("predictions", sa.predictions, "Results array or scored annotation JSON")->required();
  selftrain->add_option("out", sa.out, "Output annotation JSON")->required();
  selftrain->add_option("--images", sa.images, "Reference annotation JSON (image table, categories)");
  add_common(selftrain, f, so);
  so.top_k = selftrain->add_option("--top-k", f.top_k, "Boxes considered per image");
  so.iou_max = selftrain->add_option("--iou-max", f.iou_max, "Kept boxes overlap strictly less than this");

  auto* eval = app.add_subcommand("eval", "Average recall of proposals against ground truth");
  EvalArgs va;
  Options vo;
  eval->add_option("gt", va.gt, "Ground-truth annotation JSON")->required();
  eval->add_option("proposals", va.proposals, "Proposal annotation JSON or results array")->required();
  eval->add_option("--k", va.k, "Proposals per image");
  eval->add_flag("--acc", va.acc, "Also report pseudo-label accuracy (annotations correspond by position)");
  eval->add_option("--report", va.report, "Write the JSON report here");
  add_common(eval, f, vo);

  auto* loss = app.add_subcommand("loss", "Matched detection loss of predictions");
  LossArgs la;
  Options lo;
  loss->add_option("gt", la.gt, "Ground-truth annotation JSON")->required();
  loss->add_option("predictions", la.predictions, "Results array or annotation JSON, Q boxes per image")->required();
  loss->add_option("--logits", la.logits, "FMS sidecar with per-query logits")->required();
  loss->add_flag("--oracle", la.oracle, "Cross-check matching against brute force (Q <= 6)");
  add_common(loss, f, lo);
  lo.l1 = loss->add_option("--l1-weight", f.l1, "Weight of the L1 box term");
  lo.giou = loss->add_option("--giou-weight", f.giou, "Weight of the 1-GIoU box term");
  lo.noobj = loss->add_option("--noobj-weight", f.noobj, "Weight of the no-object class term");
  lo.match_term = loss->add_option("--match-class-term", f.match_term, "Class term in the matching cost")
                      ->check(CLI::IsMember({"prob", "logprob"}));

  auto* kmeans = app.add_subcommand("kmeans", "Standalone k-means over pixel vectors of the deepest level");
  kmeans->require_subcommand(1);
  KMeansArgs ka;
  Options ko;
  auto* fit = kmeans->add_subcommand("fit", "Fit a pseudo-label model");
  fit->add_option("features", ka.features, "Input .fms")->required();
  fit->add_option("model", ka.model, "Output PLM1 model")->required();
  add_common(fit, f, ko);
  ko.classes = fit->add_option("--classes", f.classes, "Number of clusters");
  ko.seed = fit->add_option("--seed", f.seed, "Random seed");
  fit->add_option("--max-iter", ka.max_iter, "Lloyd iteration cap");
  fit->add_option("--tol", ka.tol, "Stop when no centroid moves more than this");
  fit->add_option("--restarts", ka.restarts, "Independent k-means++ restarts");
  auto* assign = kmeans->add_subcommand("assign", "Label rows with a fitted model");
  assign->add_option("model", ka.model, "PLM1 model")->required();
  assign->add_option("features", ka.features, "Input .fms")->required();
  assign->add_option("--out", ka.out, "Write labels JSON here instead of stdout");
  Options ao;
  add_common(assign, f, ao);

  auto* inspect = app.add_subcommand("inspect", "Print the header of an .fms file");
  std::string inspect_path;
  inspect->add_option("file", inspect_path, "Input .fms")->required();
  Options io;
  add_common(inspect, f, io);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(ea, resolve_config(f, eo), f.json);
    if (*selftrain) return cmd_selftrain(sa, resolve_config(f, so), f.json);
    if (*eval) return cmd_eval(va, f.json);
    if (*loss) return cmd_loss(la, resolve_config(f, lo), f.json);
    if (*fit) {
      auto cfg = resolve_config(f, ko);
      if (!given(ko.classes)) throw UsageError("kmeans fit requires --classes");
      return cmd_kmeans_fit(ka, cfg, f.json);
    }
    if (*assign) return cmd_kmeans_assign(ka, resolve_config(f, ao));
    if (*inspect) return cmd_inspect(inspect_path, f.json);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aptdet::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aptdet::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aptdet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
