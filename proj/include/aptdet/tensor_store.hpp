// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats shared by every stage of the pipeline:
//
//   .fms  binary feature-map stack
//         "FMS1" | u16 id_len | id bytes (UTF-8) | u32 level_count
//         | level_count x (u32 l, u32 d, u32 H, u32 W)
//         | f32 data blocks in level order, index = c*H*W + y*W + x
//         All integers and floats little-endian.
//
//   COCO-style annotation JSON with "images", "annotations" and
//   "categories" (ids 0..C-1 named "pseudo_<id>").
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptdet/box.hpp"
#include "aptdet/errors.hpp"

namespace aptdet {

struct FeatureMap {
  std::uint32_t level = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;  // channel-major, length channels*height*width

  FeatureMap() = default;
  FeatureMap(std::uint32_t l, std::uint32_t d, std::uint32_t h, std::uint32_t w)
      : level(l), channels(d), height(h), width(w),
        data(static_cast<std::size_t>(d) * h * w, 0.0f) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[c * pixels() + y * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[c * pixels() + y * width + x];
  }

  // Feature vector of one pixel, gathered across channels.
  std::vector<double> pixel_vector(std::size_t y, std::size_t x) const {
    std::vector<double> v(channels);
    for (std::size_t c = 0; c < channels; ++c) v[c] = at(c, y, x);
    return v;
  }

  bool operator==(const FeatureMap&) const = default;
};

struct FeatureStack {
  std::string image_id;
  std::vector<FeatureMap> levels;  // shallow -> deep; back() is the deepest

  const FeatureMap& last_level() const { return levels.back(); }

  const FeatureMap* find_level(std::uint32_t l) const {
    for (const auto& m : levels)
      if (m.level == l) return &m;
    return nullptr;
  }

  bool operator==(const FeatureStack&) const = default;
};

struct AnnotatedImage {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Box> boxes;  // absolute pixels
  std::vector<int> labels;
  std::vector<double> scores;  // empty, or one per box

  bool operator==(const AnnotatedImage&) const = default;
};

struct AnnotationSet {
  std::vector<AnnotatedImage> images;
  int num_classes = 0;

  bool operator==(const AnnotationSet&) const = default;
};

inline void validate(const FeatureMap& m) {
  if (m.channels == 0 || m.height == 0 || m.width == 0)
    throw InvariantError("feature map level " + std::to_string(m.level) +
                         " has a zero dimension");
  if (m.data.size() != static_cast<std::size_t>(m.channels) * m.pixels())
    throw InvariantError("feature map level " + std::to_string(m.level) +
                         ": data length does not equal d*H*W");
  for (float v : m.data)
    if (!std::isfinite(v))
      throw InvariantError("feature map level " + std::to_string(m.level) +
                           " contains non-finite values");
}

inline void validate(const FeatureStack& s) {
  if (s.levels.empty()) throw InvariantError("feature stack has no levels");
  if (s.image_id.size() > std::numeric_limits<std::uint16_t>::max())
    throw InvariantError("image id longer than 65535 bytes");
  for (std::size_t i = 0; i < s.levels.size(); ++i) {
    validate(s.levels[i]);
    if (i > 0 && s.levels[i].level <= s.levels[i - 1].level)
      throw InvariantError("feature levels must be strictly increasing");
  }
}

// Tolerance for box bounds; absolute boxes come from scaled normalized ones.
inline constexpr double kBoundsSlack = 1e-9;

inline void validate(const AnnotatedImage& img, int num_classes) {
  if (img.width <= 0 || img.height <= 0)
    throw InvariantError("image '" + img.image_id + "' has non-positive size");
  if (img.boxes.size() != img.labels.size())
    throw InvariantError("image '" + img.image_id + "': boxes/labels length mismatch");
  if (!img.scores.empty() && img.scores.size() != img.boxes.size())
    throw InvariantError("image '" + img.image_id + "': scores length mismatch");
  const double sx = kBoundsSlack * img.width;
  const double sy = kBoundsSlack * img.height;
  for (std::size_t i = 0; i < img.boxes.size(); ++i) {
    const Box& b = img.boxes[i];
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h))
      throw InvariantError("image '" + img.image_id + "': non-finite box");
    if (!(b.w > 0.0) || !(b.h > 0.0))
      throw InvariantError("image '" + img.image_id + "': box with non-positive size");
    if (b.x < -sx || b.y < -sy || b.right() > img.width + sx || b.bottom() > img.height + sy)
      throw InvariantError("image '" + img.image_id + "': box outside image bounds");
    if (img.labels[i] < 0 || img.labels[i] >= num_classes)
      throw InvariantError("image '" + img.image_id + "': label " +
                           std::to_string(img.labels[i]) + " outside [0, " +
                           std::to_string(num_classes) + ")");
    if (!img.scores.empty() && !(img.scores[i] >= 0.0 && img.scores[i] <= 1.0))
      throw InvariantError("image '" + img.image_id + "': score outside [0,1]");
  }
}

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(bits & 0xFFu));
    bits = static_cast<U>(bits >> 8);
  }
}

// Cursor over an in-memory file image with bounds-checked little-endian reads.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    need(sizeof(T), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw TruncatedError(std::string("truncated file while reading ") + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace detail

inline constexpr std::string_view kFeatureStackMagic = "FMS1";

inline std::string encode_feature_stack(const FeatureStack& stack) {
  validate(stack);
  std::string out;
  out.append(kFeatureStackMagic);
  detail::put_le(out, static_cast<std::uint16_t>(stack.image_id.size()));
  out.append(stack.image_id);
  detail::put_le(out, static_cast<std::uint32_t>(stack.levels.size()));
  for (const auto& m : stack.levels) {
    detail::put_le(out, m.level);
    detail::put_le(out, m.channels);
    detail::put_le(out, m.height);
    detail::put_le(out, m.width);
  }
  for (const auto& m : stack.levels)
    for (float v : m.data) detail::put_le(out, v);
  return out;
}

inline FeatureStack decode_feature_stack(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < kFeatureStackMagic.size() ||
      bytes.substr(0, kFeatureStackMagic.size()) != kFeatureStackMagic)
    throw FormatError("bad magic: not an FMS1 feature stack");
  r.take(kFeatureStackMagic.size(), "magic");

  FeatureStack stack;
  const auto id_len = r.get<std::uint16_t>("image id length");
  stack.image_id = std::string(r.take(id_len, "image id"));
  const auto count = r.get<std::uint32_t>("level count");
  if (count == 0) throw FormatError("feature stack declares zero levels");
  // Every level header is 16 bytes; reject absurd counts before allocating.
  if (r.remaining() / 16 < count) throw TruncatedError("truncated file while reading level headers");

  stack.levels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureMap m;
    m.level = r.get<std::uint32_t>("level index");
    m.channels = r.get<std::uint32_t>("channels");
    m.height = r.get<std::uint32_t>("height");
    m.width = r.get<std::uint32_t>("width");
    if (m.channels == 0 || m.height == 0 || m.width == 0)
      throw FormatError("level " + std::to_string(m.level) + " has a zero dimension");
    stack.levels.push_back(std::move(m));
  }
  for (auto& m : stack.levels) {
    const std::uint64_t n = static_cast<std::uint64_t>(m.channels) * m.height * m.width;
    if (n > r.remaining() / 4) throw TruncatedError("truncated file while reading level data");
    m.data.resize(n);
    for (auto& v : m.data) v = r.get<float>("level data");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after feature data");
  validate(stack);
  return stack;
}

inline void write_feature_stack(const FeatureStack& stack, const std::filesystem::path& path) {
  const std::string bytes = encode_feature_stack(stack);  // validates before touching disk
  detail::write_file(path, bytes);
}

inline FeatureStack read_feature_stack(const std::filesystem::path& path) {
  return decode_feature_stack(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Annotation JSON

inline std::string category_name(int id) { return "pseudo_" + std::to_string(id); }

inline nlohmann::ordered_json annotations_to_json(std::span<const AnnotatedImage> images,
                                                  int num_classes) {
  using nlohmann::ordered_json;
  if (num_classes < 1) throw InvariantError("number of classes must be >= 1");
  ordered_json doc;
  ordered_json jimages = ordered_json::array();
  ordered_json janns = ordered_json::array();
  long long ann_id = 1;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    validate(img, num_classes);
    const long long image_id = static_cast<long long>(i) + 1;
    jimages.push_back({{"id", image_id},
                       {"file_name", img.image_id},
                       {"width", img.width},
                       {"height", img.height}});
    for (std::size_t k = 0; k < img.boxes.size(); ++k) {
      const Box& b = img.boxes[k];
      ordered_json a = {{"id", ann_id++},
                        {"image_id", image_id},
                        {"category_id", img.labels[k]},
                        {"bbox", {b.x, b.y, b.w, b.h}},
                        {"area", b.area()},
                        {"iscrowd", 0}};
      if (!img.scores.empty()) a["score"] = img.scores[k];
      janns.push_back(std::move(a));
    }
  }
  ordered_json cats = ordered_json::array();
  for (int c = 0; c < num_classes; ++c) cats.push_back({{"id", c}, {"name", category_name(c)}});
  doc["images"] = std::move(jimages);
  doc["annotations"] = std::move(janns);
  doc["categories"] = std::move(cats);
  return doc;
}

inline std::string encode_annotations(std::span<const AnnotatedImage> images, int num_classes) {
  return annotations_to_json(images, num_classes).dump(1) + "\n";
}

inline void write_annotations(std::span<const AnnotatedImage> images, int num_classes,
                              const std::filesystem::path& path) {
  detail::write_file(path, encode_annotations(images, num_classes));
}

namespace detail {

template <typename J>
const J& require(const J& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key))
    throw FormatError(std::string(where) + ": missing field '" + key + "'");
  return obj.at(key);
}

template <typename J>
double require_number(const J& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw FormatError(std::string(where) + ": field '" + key + "' not a number");
  return v.template get<double>();
}

template <typename J>
long long require_integer(const J& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer())
    throw FormatError(std::string(where) + ": field '" + key + "' not an integer");
  return v.template get<long long>();
}

inline Box parse_bbox(const nlohmann::json& v, const char* where) {
  if (!v.is_array() || v.size() != 4)
    throw FormatError(std::string(where) + ": bbox must be [x, y, w, h]");
  for (const auto& e : v)
    if (!e.is_number()) throw FormatError(std::string(where) + ": bbox entries must be numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

inline nlohmann::json parse_json(std::string_view text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": invalid JSON (" + e.what() + ")");
  }
}

}  // namespace detail

// Image table of a COCO-style document: numeric id -> index into images.
struct ImageIndex {
  std::vector<AnnotatedImage> images;  // boxes empty
  std::map<long long, std::size_t> by_id;
};

inline ImageIndex parse_image_table(const nlohmann::json& doc) {
  const auto& jimages = detail::require(doc, "images", "annotation file");
  if (!jimages.is_array()) throw FormatError("'images' must be an array");
  ImageIndex index;
  for (const auto& ji : jimages) {
    const long long id = detail::require_integer(ji, "id", "image entry");
    const auto& name = detail::require(ji, "file_name", "image entry");
    if (!name.is_string()) throw FormatError("image entry: file_name must be a string");
    AnnotatedImage img;
    img.image_id = name.get<std::string>();
    img.width = static_cast<int>(detail::require_integer(ji, "width", "image entry"));
    img.height = static_cast<int>(detail::require_integer(ji, "height", "image entry"));
    if (img.width <= 0 || img.height <= 0)
      throw InvariantError("image '" + img.image_id + "' has non-positive size");
    if (!index.by_id.emplace(id, index.images.size()).second)
      throw FormatError("duplicate image id " + std::to_string(id));
    index.images.push_back(std::move(img));
  }
  return index;
}

inline AnnotationSet annotations_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("annotation file must be a JSON object");
  ImageIndex index = parse_image_table(doc);

  const auto& jcats = detail::require(doc, "categories", "annotation file");
  if (!jcats.is_array() || jcats.empty()) throw FormatError("'categories' must be a non-empty array");
  for (std::size_t c = 0; c < jcats.size(); ++c) {
    if (detail::require_integer(jcats[c], "id", "category") != static_cast<long long>(c))
      throw FormatError("category ids must be 0..C-1 in order");
  }
  AnnotationSet set;
  set.num_classes = static_cast<int>(jcats.size());

  const auto& janns = detail::require(doc, "annotations", "annotation file");
  if (!janns.is_array()) throw FormatError("'annotations' must be an array");
  // Scores must be all-or-nothing per image.
  std::vector<int> scored(index.images.size(), -1);
  for (const auto& ja : janns) {
    const long long image_id = detail::require_integer(ja, "image_id", "annotation");
    auto it = index.by_id.find(image_id);
    if (it == index.by_id.end())
      throw FormatError("annotation references unknown image_id " + std::to_string(image_id));
    auto& img = index.images[it->second];
    const long long cat = detail::require_integer(ja, "category_id", "annotation");
    if (cat < 0 || cat >= set.num_classes)
      throw InvariantError("category_id " + std::to_string(cat) + " out of range");
    img.boxes.push_back(detail::parse_bbox(detail::require(ja, "bbox", "annotation"), "annotation"));
    img.labels.push_back(static_cast<int>(cat));
    const int has_score = ja.contains("score") ? 1 : 0;
    int& flag = scored[it->second];
    if (flag >= 0 && flag != has_score)
      throw FormatError("image '" + img.image_id + "': score present on some annotations only");
    flag = has_score;
    if (has_score) img.scores.push_back(detail::require_number(ja, "score", "annotation"));
  }
  for (const auto& img : index.images) validate(img, set.num_classes);
  set.images = std::move(index.images);
  return set;
}

inline AnnotationSet decode_annotations(std::string_view text) {
  return annotations_from_json(detail::parse_json(text, "annotation file"));
}

inline AnnotationSet read_annotations(const std::filesystem::path& path) {
  return decode_annotations(detail::read_file(path));
}

}  // namespace aptdet
