// SPDX-License-Identifier: Apache-2.0
//
// Masks -> connected regions -> (box, pooled descriptor) proposals, and the
// IoU / semantic-similarity merge filter applied to an image's proposals.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "aptdet/box.hpp"
#include "aptdet/spectral.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

struct Pixel {
  int y = 0;
  int x = 0;
  bool operator==(const Pixel&) const = default;
};

struct Region {
  int mask_id = 0;
  int grid_height = 0;  // resolution the pixel coordinates refer to
  int grid_width = 0;
  int label = 0;
  std::vector<Pixel> pixels;
};

struct Proposal {
  Box box;  // normalized image coordinates
  std::vector<double> descriptor;

  bool operator==(const Proposal&) const = default;
};

struct FilterConfig {
  double iou_merge = 0.75;
  double sim_merge = 0.90;
  double min_rel_area = 0.001;
};

// 4-connected components of every label. Regions are ordered by their
// first pixel in row-major order; together they partition the grid.
inline std::vector<Region> connected_components(const ClusterMask& mask, int mask_id = 0) {
  const int h = mask.height, w = mask.width;
  std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
  std::vector<Region> regions;
  std::deque<Pixel> queue;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (seen[static_cast<std::size_t>(y0) * w + x0]) continue;
      Region r;
      r.mask_id = mask_id;
      r.grid_height = h;
      r.grid_width = w;
      r.label = mask.at(y0, x0);
      seen[static_cast<std::size_t>(y0) * w + x0] = 1;
      queue.push_back({y0, x0});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        r.pixels.push_back(p);
        const Pixel nbr[4] = {{p.y - 1, p.x}, {p.y + 1, p.x}, {p.y, p.x - 1}, {p.y, p.x + 1}};
        for (const Pixel& q : nbr) {
          if (q.y < 0 || q.y >= h || q.x < 0 || q.x >= w) continue;
          auto& s = seen[static_cast<std::size_t>(q.y) * w + q.x];
          if (s || mask.at(q.y, q.x) != r.label) continue;
          s = 1;
          queue.push_back(q);
        }
      }
      regions.push_back(std::move(r));
    }
  }
  return regions;
}

// Tight box of the region in normalized coordinates, and the mean of the
// deepest feature map over the region (pixels mapped by nearest neighbour).
inline Proposal region_to_proposal(const Region& region, const FeatureMap& last_level) {
  if (region.pixels.empty()) throw std::invalid_argument("empty region");
  if (region.grid_height <= 0 || region.grid_width <= 0) throw std::invalid_argument("region has no grid");
  int x0 = region.grid_width, y0 = region.grid_height, x1 = -1, y1 = -1;
  std::vector<double> sum(last_level.channels, 0.0);
  const double sy = static_cast<double>(last_level.height) / region.grid_height;
  const double sx = static_cast<double>(last_level.width) / region.grid_width;
  for (const Pixel& p : region.pixels) {
    if (p.y < 0 || p.y >= region.grid_height || p.x < 0 || p.x >= region.grid_width)
      throw std::invalid_argument("region pixel outside its grid");
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
    const auto fy = std::min<std::size_t>(last_level.height - 1, static_cast<std::size_t>((p.y + 0.5) * sy));
    const auto fx = std::min<std::size_t>(last_level.width - 1, static_cast<std::size_t>((p.x + 0.5) * sx));
    for (std::size_t c = 0; c < last_level.channels; ++c) sum[c] += last_level.at(c, fy, fx);
  }
  Proposal out;
  const double gw = region.grid_width, gh = region.grid_height;
  out.box = {x0 / gw, y0 / gh, (x1 + 1) / gw - x0 / gw, (y1 + 1) / gh - y0 / gh};
  const double n = static_cast<double>(region.pixels.size());
  out.descriptor.resize(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) out.descriptor[c] = sum[c] / n;
  return out;
}

inline double descriptor_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = descriptor_norm(a), nb = descriptor_norm(b);
  if (na == 0.0 || nb == 0.0 || a.size() != b.size()) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline bool should_merge(double overlap, double similarity, const FilterConfig& cfg) {
  return overlap >= cfg.iou_merge || (overlap > 0.0 && similarity >= cfg.sim_merge);
}

// Drops tiny boxes, then greedily merges the qualifying pair with the
// highest IoU (ties: lowest (i, j)) into its union box, until no pair
// qualifies. A merged descriptor is the area-weighted mean over all the
// original members, so it does not depend on the merge order.
inline std::vector<Proposal> filter_proposals(std::vector<Proposal> props, const FilterConfig& cfg = {}) {
  for (double t : {cfg.iou_merge, cfg.sim_merge, cfg.min_rel_area})
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("filter thresholds must lie in [0, 1]");
  std::erase_if(props, [&](const Proposal& p) { return p.box.area() < cfg.min_rel_area; });

  const std::size_t n = props.size();
  std::vector<double> overlap(n * n, 0.0), similarity(n * n, 0.0);
  auto refresh = [&](std::size_t i, std::size_t j) {
    overlap[i * n + j] = overlap[j * n + i] = iou(props[i].box, props[j].box);
    similarity[i * n + j] = similarity[j * n + i] = cosine_similarity(props[i].descriptor, props[j].descriptor);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) refresh(i, j);

  // Merged-away entries stay in place and are skipped; compaction happens once at the end.
  std::vector<char> alive(n, 1);
  std::vector<double> mass(n);
  for (std::size_t i = 0; i < n; ++i) mass[i] = props[i].box.area();
  for (;;) {
    std::size_t bi = n, bj = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        const double o = overlap[i * n + j];
        if (o > best && should_merge(o, similarity[i * n + j], cfg)) {
          best = o;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n) break;
    Proposal& a = props[bi];
    const Proposal& b = props[bj];
    const double wa = mass[bi], wb = mass[bj];
    for (std::size_t c = 0; c < a.descriptor.size(); ++c)
      a.descriptor[c] = (wa * a.descriptor[c] + wb * b.descriptor[c]) / (wa + wb);
    mass[bi] = wa + wb;
    a.box = enclosing_box(a.box, b.box);
    alive[bj] = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != bi && alive[k]) refresh(bi, k);
  }
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) out.push_back(std::move(props[i]));
  return out;
}

}  // namespace aptdet
