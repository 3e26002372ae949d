// SPDX-License-Identifier: Apache-2.0
//
// Per-image pixel clustering (Ng-Jordan-Weiss spectral clustering) over
// one feature map, and its multi-level / multi-K aggregation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "aptdet/kmeans.hpp"
#include "aptdet/parallel.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

struct ClusterMask {
  std::uint32_t source_level = 0;
  int k = 1;
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major height x width, values in [0, k)

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const ClusterMask&) const = default;
};

struct LocalClusterConfig {
  std::vector<int> k_set{2, 3, 4, 5};
  std::vector<std::uint32_t> level_set;  // empty: the two deepest levels
  int knn = 10;
  std::uint64_t seed = 0;
  std::size_t max_pixels = 4096;  // larger maps are bilinearly downsampled
  int restarts = 10;
  int threads = 1;
};

using Affinity = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr double kZeroPixelAffinity = 1e-6;

namespace detail {

// Pixel features as rows (pixel index = y*W + x), each L2-normalized.
// Rows of all-zero pixels stay zero and are reported in `zero`.
inline RowMatrix normalized_pixels(const FeatureMap& m, std::vector<char>& zero) {
  const auto n = static_cast<Eigen::Index>(m.pixels());
  RowMatrix x(n, m.channels);
  for (std::size_t c = 0; c < m.channels; ++c)
    for (Eigen::Index p = 0; p < n; ++p) x(p, static_cast<Eigen::Index>(c)) = m.data[c * m.pixels() + p];
  zero.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double norm = x.row(p).norm();
    if (norm > 0.0)
      x.row(p) /= norm;
    else
      zero[static_cast<std::size_t>(p)] = 1;
  }
  return x;
}

}  // namespace detail

// Clamped-cosine kNN affinity over the pixels of one feature map,
// symmetrized with max(A, A^T) and with a zero diagonal.
inline Affinity build_affinity(const FeatureMap& fmap, int knn) {
  const auto n = static_cast<Eigen::Index>(fmap.pixels());
  if (knn < 1 || knn >= n)
    throw std::invalid_argument("knn must satisfy 1 <= knn < H*W (got " + std::to_string(knn) + ")");
  std::vector<char> zero;
  const RowMatrix x = detail::normalized_pixels(fmap, zero);

  std::vector<Eigen::Triplet<double>> edges;
  edges.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(knn) * 2);
  std::vector<Eigen::Index> candidates;
  std::vector<double> cosine(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (zero[static_cast<std::size_t>(i)]) continue;
    candidates.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || zero[static_cast<std::size_t>(j)]) continue;
      cosine[static_cast<std::size_t>(j)] = std::clamp(x.row(i).dot(x.row(j)), -1.0, 1.0);
      candidates.push_back(j);
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(knn), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), [&](Eigen::Index a, Eigen::Index b) {
                        const double ca = cosine[static_cast<std::size_t>(a)];
                        const double cb = cosine[static_cast<std::size_t>(b)];
                        return ca != cb ? ca > cb : a < b;
                      });
    for (std::size_t t = 0; t < take; ++t) {
      const Eigen::Index j = candidates[t];
      const double w = std::max(0.0, cosine[static_cast<std::size_t>(j)]);
      if (w > 0.0) {
        edges.emplace_back(i, j, w);
        edges.emplace_back(j, i, w);
      }
    }
  }
  // Zero-norm pixels get a tiny link to their 4-neighbours.
  const auto h = static_cast<Eigen::Index>(fmap.height);
  const auto w = static_cast<Eigen::Index>(fmap.width);
  for (Eigen::Index p = 0; p < n; ++p) {
    if (!zero[static_cast<std::size_t>(p)]) continue;
    const Eigen::Index y = p / w, xx = p % w;
    const Eigen::Index nbr[4][2] = {{y - 1, xx}, {y + 1, xx}, {y, xx - 1}, {y, xx + 1}};
    for (const auto& q : nbr) {
      if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
      const Eigen::Index j = q[0] * w + q[1];
      edges.emplace_back(p, j, kZeroPixelAffinity);
      edges.emplace_back(j, p, kZeroPixelAffinity);
    }
  }
  Affinity a(n, n);
  a.setFromTriplets(edges.begin(), edges.end(), [](double u, double v) { return std::max(u, v); });
  a.makeCompressed();
  return a;
}

// Eigen-decomposition of L_sym = I - D^{-1/2} A D^{-1/2}, eigenvalues ascending.
// Isolated pixels (degree 0) get an identity row.
struct LaplacianSpectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // columns, matching eigenvalues
};

inline LaplacianSpectrum laplacian_spectrum(const Affinity& a) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd inv_sqrt_deg = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double deg = 0.0;
    for (Affinity::InnerIterator it(a, i); it; ++it) deg += it.value();
    if (deg > 0.0) inv_sqrt_deg(i) = 1.0 / std::sqrt(deg);
  }
  Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Affinity::InnerIterator it(a, i); it; ++it)
      lap(i, it.col()) -= inv_sqrt_deg(i) * it.value() * inv_sqrt_deg(it.col());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition of the graph Laplacian failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

// Bilinear resampling with half-pixel centres.
inline FeatureMap resize_bilinear(const FeatureMap& m, std::uint32_t out_h, std::uint32_t out_w) {
  FeatureMap out(m.level, m.channels, out_h, out_w);
  auto coord = [](std::uint32_t o, std::uint32_t out_n, std::uint32_t in_n, std::uint32_t& i0,
                  std::uint32_t& i1, double& t) {
    double s = (o + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<std::uint32_t>(std::floor(s));
    i1 = std::min(i0 + 1, in_n - 1);
    t = s - i0;
  };
  for (std::uint32_t y = 0; y < out_h; ++y) {
    std::uint32_t y0, y1;
    double ty;
    coord(y, out_h, m.height, y0, y1, ty);
    for (std::uint32_t x = 0; x < out_w; ++x) {
      std::uint32_t x0, x1;
      double tx;
      coord(x, out_w, m.width, x0, x1, tx);
      for (std::uint32_t c = 0; c < m.channels; ++c) {
        const double top = (1 - tx) * m.at(c, y0, x0) + tx * m.at(c, y0, x1);
        const double bot = (1 - tx) * m.at(c, y1, x0) + tx * m.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

// Everything about one level that does not depend on K: the working-grid
// size after optional downsampling and the Laplacian spectrum there.
struct LevelSpectrum {
  std::uint32_t level = 0;
  int height = 0;  // original grid
  int width = 0;
  int work_height = 0;  // grid the spectrum lives on
  int work_width = 0;
  LaplacianSpectrum spectrum;
};

inline LevelSpectrum prepare_level(const FeatureMap& fmap, int knn, std::size_t max_pixels) {
  LevelSpectrum out;
  out.level = fmap.level;
  out.height = static_cast<int>(fmap.height);
  out.width = static_cast<int>(fmap.width);
  FeatureMap work;
  const FeatureMap* src = &fmap;
  if (fmap.pixels() > max_pixels) {
    const double s = std::sqrt(static_cast<double>(max_pixels) / static_cast<double>(fmap.pixels()));
    const auto h = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(fmap.height * s)));
    const auto w = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(fmap.width * s)));
    work = resize_bilinear(fmap, h, w);
    src = &work;
  }
  out.work_height = static_cast<int>(src->height);
  out.work_width = static_cast<int>(src->width);
  const auto n = static_cast<int>(src->pixels());
  if (n > 1) out.spectrum = laplacian_spectrum(build_affinity(*src, std::min(knn, n - 1)));
  return out;
}

namespace detail {

// Relabels clusters by first appearance in row-major order.
inline void canonicalize(std::vector<int>& labels, int k) {
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : labels) {
    int& r = remap[static_cast<std::size_t>(l)];
    if (r < 0) r = next++;
    l = r;
  }
}

}  // namespace detail

inline ClusterMask cluster_level(const LevelSpectrum& ls, int k, std::uint64_t seed, int restarts = 10) {
  ClusterMask mask;
  mask.source_level = ls.level;
  mask.k = k;
  mask.height = ls.height;
  mask.width = ls.width;
  const auto total = static_cast<std::size_t>(ls.height) * static_cast<std::size_t>(ls.width);
  if (k < 1 || static_cast<std::size_t>(k) > total)
    throw std::invalid_argument("cluster count K=" + std::to_string(k) + " must be in [1, H*W]");
  mask.labels.assign(total, 0);
  if (k == 1) return mask;
  if (static_cast<std::size_t>(k) == total) {
    std::iota(mask.labels.begin(), mask.labels.end(), 0);
    return mask;
  }
  const int n = ls.work_height * ls.work_width;
  if (k > n)
    throw std::invalid_argument("cluster count K=" + std::to_string(k) + " exceeds the downsampled grid");

  RowMatrix embedding = ls.spectrum.eigenvectors.leftCols(k);
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  KMeansOptions opt;
  opt.seed = seed;
  opt.restarts = restarts;
  KMeansTrace trace;
  kmeans_fit(embedding, k, opt, &trace);
  std::vector<int> work = std::move(trace.labels);

  if (n == static_cast<int>(total)) {
    mask.labels = std::move(work);
  } else {
    for (int y = 0; y < ls.height; ++y) {
      const int sy = std::min(ls.work_height - 1, static_cast<int>((y + 0.5) * ls.work_height / ls.height));
      for (int x = 0; x < ls.width; ++x) {
        const int sx = std::min(ls.work_width - 1, static_cast<int>((x + 0.5) * ls.work_width / ls.width));
        mask.labels[static_cast<std::size_t>(y) * ls.width + x] = work[static_cast<std::size_t>(sy) * ls.work_width + sx];
      }
    }
  }
  detail::canonicalize(mask.labels, k);
  return mask;
}

inline ClusterMask spectral_cluster(const FeatureMap& fmap, int k, int knn, std::uint64_t seed,
                                    std::size_t max_pixels = 4096, int restarts = 10) {
  validate(fmap);
  if (k < 1 || static_cast<std::size_t>(k) > fmap.pixels())
    throw std::invalid_argument("cluster count K=" + std::to_string(k) + " must be in [1, H*W]");
  if (knn < 1) throw std::invalid_argument("knn must be >= 1");
  if (k == 1 || static_cast<std::size_t>(k) == fmap.pixels()) {
    LevelSpectrum trivial{fmap.level, static_cast<int>(fmap.height), static_cast<int>(fmap.width),
                          static_cast<int>(fmap.height), static_cast<int>(fmap.width), {}};
    return cluster_level(trivial, k, seed, restarts);
  }
  return cluster_level(prepare_level(fmap, knn, max_pixels), k, seed, restarts);
}

inline std::uint64_t mask_seed(std::uint64_t seed, std::uint32_t level, int k) {
  return seed ^ mix_seed((static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint32_t>(k));
}

inline std::vector<std::uint32_t> resolve_levels(const FeatureStack& stack, const LocalClusterConfig& cfg) {
  if (!cfg.level_set.empty()) {
    for (auto l : cfg.level_set)
      if (!stack.find_level(l))
        throw std::invalid_argument("level " + std::to_string(l) + " not present in stack '" +
                                    stack.image_id + "'");
    return cfg.level_set;
  }
  std::vector<std::uint32_t> out;
  const std::size_t first = stack.levels.size() >= 2 ? stack.levels.size() - 2 : 0;
  for (std::size_t i = first; i < stack.levels.size(); ++i) out.push_back(stack.levels[i].level);
  return out;
}

// One mask per (level, K), ordered level-major in configuration order.
inline std::vector<ClusterMask> cluster_multi(const FeatureStack& stack, const LocalClusterConfig& cfg) {
  validate(stack);
  if (cfg.k_set.empty()) throw std::invalid_argument("K set must not be empty");
  for (int k : cfg.k_set)
    if (k < 1) throw std::invalid_argument("every K must be >= 1");
  if (cfg.knn < 1) throw std::invalid_argument("knn must be >= 1");
  const auto levels = resolve_levels(stack, cfg);
  const int max_k = *std::max_element(cfg.k_set.begin(), cfg.k_set.end());

  std::vector<LevelSpectrum> spectra(levels.size());
  parallel_for(levels.size(), cfg.threads, [&](std::size_t i) {
    const FeatureMap& fmap = *stack.find_level(levels[i]);
    if (static_cast<std::size_t>(max_k) > fmap.pixels())
      throw std::invalid_argument("K=" + std::to_string(max_k) + " exceeds H*W of level " +
                                  std::to_string(fmap.level));
    spectra[i] = prepare_level(fmap, cfg.knn, cfg.max_pixels);
  });

  const std::size_t nk = cfg.k_set.size();
  std::vector<ClusterMask> masks(levels.size() * nk);
  parallel_for(masks.size(), cfg.threads, [&](std::size_t idx) {
    const LevelSpectrum& ls = spectra[idx / nk];
    const int k = cfg.k_set[idx % nk];
    masks[idx] = cluster_level(ls, k, mask_seed(cfg.seed, ls.level, k), cfg.restarts);
  });
  return masks;
}

}  // namespace aptdet
