// SPDX-License-Identifier: Apache-2.0
//
// Drives the aptdet executable end to end.
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace aptdet {
namespace {

using testing::TempDir;

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
  const std::string cmd = std::string(APTDET_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Feature directory with planted scenes and a manifest; returns the truth set.
std::vector<AnnotatedImage> write_scenes(const std::filesystem::path& dir, std::uint64_t seed, int n) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"images", nlohmann::json::array()}};
  std::vector<AnnotatedImage> truth;
  for (const auto& s : testing::make_scenes(seed, n)) {
    write_feature_stack(s.stack, dir / (s.stack.image_id + ".fms"));
    manifest["images"].push_back({{"image_id", s.stack.image_id}, {"width", s.truth.width}, {"height", s.truth.height}});
    truth.push_back(s.truth);
  }
  spit(dir / "manifest.json", manifest.dump());
  return truth;
}

TEST(Cli, EmptyDirectoryIsDataError) {
  TempDir dir("cli");
  std::filesystem::create_directories(dir / "empty");
  const auto r = run("extract " + q(dir / "empty") + " " + q(dir / "out.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("no feature stacks found"), std::string::npos);
}

TEST(Cli, MissingInputIsUsageError) {
  TempDir dir("cli");
  EXPECT_EQ(run("eval " + q(dir / "nope.json") + " " + q(dir / "nope.json")).code, 2);
  EXPECT_EQ(run("inspect " + q(dir / "nope.fms")).code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, CorruptStackIsReportedPerFile) {
  TempDir dir("cli");
  write_scenes(dir / "feat", 3, 3);
  spit(dir / "feat" / "broken.fms", "FMS1garbage");
  const auto r = run("extract " + q(dir / "feat") + " " + q(dir / "out.json") + " --classes 3");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("broken.fms"), std::string::npos);
}

TEST(Cli, ExtractIsDeterministicAcrossRunsAndThreads) {
  TempDir dir("cli");
  const auto truth = write_scenes(dir / "feat", 11, 4);
  const auto base = "extract " + q(dir / "feat") + " ";
  ASSERT_EQ(run(base + q(dir / "a.json") + " --classes 4 --seed 3 --threads 1").code, 0);
  ASSERT_EQ(run(base + q(dir / "b.json") + " --classes 4 --seed 3 --threads 1").code, 0);
  ASSERT_EQ(run(base + q(dir / "c.json") + " --classes 4 --seed 3 --threads 8").code, 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "c.json"));

  const auto set = read_annotations(dir / "a.json");
  EXPECT_EQ(set.num_classes, 4);
  ASSERT_EQ(set.images.size(), truth.size());
  EXPECT_EQ(set.images[0].width, truth[0].width);
}

TEST(Cli, ExtractJsonReportsStagesAndConfig) {
  TempDir dir("cli");
  write_scenes(dir / "feat", 12, 2);
  const auto r = run("extract " + q(dir / "feat") + " " + q(dir / "a.json") + " --classes 3 --json --k-set 2,3");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto start = r.output.find('{');
  ASSERT_NE(start, std::string::npos);
  const auto j = nlohmann::json::parse(r.output.substr(start));
  EXPECT_EQ(j["images"], 2);
  EXPECT_EQ(j["masks"], 2 * 2 * 2);
  EXPECT_EQ(j["config"]["k_set"], nlohmann::json({2, 3}));
  EXPECT_NE(r.output.find("mean proposals/image"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir("cli");
  write_scenes(dir / "feat", 13, 3);
  spit(dir / "cfg.json", R"({"classes": 5, "seed": 9})");
  ASSERT_EQ(run("extract " + q(dir / "feat") + " " + q(dir / "a.json") + " --config " + q(dir / "cfg.json")).code, 0);
  EXPECT_EQ(read_annotations(dir / "a.json").num_classes, 5);
  ASSERT_EQ(run("extract " + q(dir / "feat") + " " + q(dir / "b.json") + " --config " + q(dir / "cfg.json") +
                " --classes 3")
                .code,
            0);
  EXPECT_EQ(read_annotations(dir / "b.json").num_classes, 3);
  spit(dir / "bad.json", R"({"clases": 5})");
  EXPECT_EQ(run("extract " + q(dir / "feat") + " " + q(dir / "c.json") + " --config " + q(dir / "bad.json")).code, 2);
}

TEST(Cli, EvalAgainstItselfIsPerfect) {
  TempDir dir("cli");
  std::mt19937_64 rng(1);
  std::vector<AnnotatedImage> gt;
  for (int i = 0; i < 5; ++i) gt.push_back(testing::random_annotated(rng, "im" + std::to_string(i), 3, false));
  write_annotations(gt, 3, dir / "gt.json");
  const auto r = run("eval " + q(dir / "gt.json") + " " + q(dir / "gt.json") + " --acc --report " + q(dir / "r.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("AR@100: 1.000000"), std::string::npos);
  EXPECT_NE(r.output.find("ACC: 1.000000"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(report["ar_at_k"]["100"], 1.0);
}

TEST(Cli, SelfTrainFilterIsIdempotent) {
  TempDir dir("cli");
  std::mt19937_64 rng(2);
  std::vector<AnnotatedImage> preds;
  for (int i = 0; i < 6; ++i) {
    auto img = testing::random_annotated(rng, "im" + std::to_string(i), 4, true);
    const std::size_t n = img.boxes.size();
    for (std::size_t k = 0; k < n; ++k) {  // near-duplicates to suppress
      img.boxes.push_back({img.boxes[k].x, img.boxes[k].y, img.boxes[k].w * 0.95, img.boxes[k].h});
      img.labels.push_back(img.labels[k]);
      img.scores.push_back(img.scores[k] * 0.5);
    }
    preds.push_back(img);
  }
  write_annotations(preds, 4, dir / "p.json");
  ASSERT_EQ(run("selftrain-filter " + q(dir / "p.json") + " " + q(dir / "t1.json")).code, 0);
  ASSERT_EQ(run("selftrain-filter " + q(dir / "t1.json") + " " + q(dir / "t2.json")).code, 0);
  EXPECT_EQ(slurp(dir / "t1.json"), slurp(dir / "t2.json"));
  EXPECT_LT(slurp(dir / "t1.json").size(), slurp(dir / "p.json").size());
}

TEST(Cli, SelfTrainFilterAcceptsResultsArray) {
  TempDir dir("cli");
  write_annotations(std::vector<AnnotatedImage>{{"a", 100, 100, {}, {}, {}}}, 2, dir / "ref.json");
  spit(dir / "res.json",
       R"([{"image_id":1,"category_id":1,"bbox":[0,0,50,50],"score":0.9},)"
       R"({"image_id":1,"category_id":0,"bbox":[1,0,50,50],"score":0.8}])");
  EXPECT_EQ(run("selftrain-filter " + q(dir / "res.json") + " " + q(dir / "t.json")).code, 2);
  ASSERT_EQ(run("selftrain-filter " + q(dir / "res.json") + " " + q(dir / "t.json") + " --images " + q(dir / "ref.json")).code, 0);
  const auto set = read_annotations(dir / "t.json");
  ASSERT_EQ(set.images[0].boxes.size(), 1u);
  EXPECT_EQ(set.images[0].labels[0], 1);
}

// gt with one box, Q = 3 predictions and a logits sidecar with `classes` + 1 rows
void write_loss_inputs(const TempDir& dir, int classes) {
  write_annotations(std::vector<AnnotatedImage>{{"a", 100, 100, {{10, 10, 30, 30}}, {1}, {}}}, 2, dir / "gt.json");
  write_annotations(std::vector<AnnotatedImage>{{"a", 100, 100, {{12, 10, 30, 30}, {60, 60, 20, 20}, {0, 0, 5, 5}}, {1, 0, 0}, {0.9, 0.5, 0.1}}},
                    2, dir / "pred.json");
  FeatureStack logits;
  logits.image_id = "logits";
  FeatureMap m(1, static_cast<std::uint32_t>(classes + 1), 3, 1);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (auto& v : m.data) v = g(rng);
  logits.levels.push_back(m);
  write_feature_stack(logits, dir / "logits.fms");
}

TEST(Cli, LossWithOracleCrossCheck) {
  TempDir dir("cli");
  write_loss_inputs(dir, 2);
  const auto r = run("loss " + q(dir / "gt.json") + " " + q(dir / "pred.json") + " --logits " + q(dir / "logits.fms") +
                     " --oracle --match-class-term logprob --noobj-weight 1");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("total_loss:"), std::string::npos);
  EXPECT_NE(r.output.find("0 mismatches"), std::string::npos);
}

TEST(Cli, LossClassCountMismatchIsSchemaError) {
  TempDir dir("cli");
  write_loss_inputs(dir, 5);
  const auto r = run("loss " + q(dir / "gt.json") + " " + q(dir / "pred.json") + " --logits " + q(dir / "logits.fms"));
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, InspectAndKMeans) {
  TempDir dir("cli");
  std::mt19937_64 rng(4);
  FeatureStack s = testing::random_stack(rng, "probe");
  s.levels.back() = FeatureMap(9, 3, 4, 5);
  for (auto& v : s.levels.back().data) v = std::normal_distribution<float>(0, 1)(rng);
  write_feature_stack(s, dir / "s.fms");

  const auto text = run("inspect " + q(dir / "s.fms"));
  ASSERT_EQ(text.code, 0);
  EXPECT_NE(text.output.find("image_id: probe"), std::string::npos);
  EXPECT_NE(text.output.find("l=9 d=3 H=4 W=5"), std::string::npos);
  const auto js = run("inspect --json " + q(dir / "s.fms"));
  ASSERT_EQ(js.code, 0);
  EXPECT_EQ(nlohmann::json::parse(js.output)["image_id"], "probe");

  ASSERT_EQ(run("kmeans fit " + q(dir / "s.fms") + " " + q(dir / "m.plm") + " --classes 4 --seed 1").code, 0);
  const auto a = run("kmeans assign " + q(dir / "m.plm") + " " + q(dir / "s.fms"));
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(nlohmann::json::parse(a.output).size(), 20u);
  EXPECT_EQ(read_model(dir / "m.plm").num_classes(), 4);
  EXPECT_EQ(run("kmeans fit " + q(dir / "s.fms") + " " + q(dir / "m2.plm") + " --classes 21").code, 1);
}

}  // namespace
}  // namespace aptdet
