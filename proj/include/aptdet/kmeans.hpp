// SPDX-License-Identifier: Apache-2.0
//
// Seeded k-means++ / Lloyd clustering and the pseudo-label model it produces.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "aptdet/errors.hpp"
#include "aptdet/parallel.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultPseudoClasses = 2048;

struct KMeansOptions {
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-4;  // on the largest centroid shift
  int restarts = 1;   // best inertia wins
  int threads = 1;    // assignment step only; output independent of this
};

struct PseudoLabelModel {
  RowMatrix centroids;  // C x d
  double inertia = 0.0;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }

  bool operator==(const PseudoLabelModel& o) const {
    return centroids.rows() == o.centroids.rows() && centroids.cols() == o.centroids.cols() &&
           centroids == o.centroids && inertia == o.inertia && seed == o.seed;
  }
};

// Optional diagnostics from kmeans_fit for the winning restart.
struct KMeansTrace {
  std::vector<int> labels;               // final assignment of each row
  std::vector<double> inertia_history;  // one entry per assignment step
  int iterations = 0;
  int restart = 0;
};

namespace detail {

inline double squared_distance(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

// Nearest centroid per row; ties go to the lowest centroid index.
inline double assign_rows(const RowMatrix& x, const RowMatrix& centroids, std::vector<int>& labels,
                          std::vector<double>& dist2, int threads) {
  const auto n = static_cast<std::size_t>(x.rows());
  labels.assign(n, 0);
  dist2.assign(n, 0.0);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
        const double d = squared_distance(x, static_cast<Eigen::Index>(i), centroids, k);
        if (d < best) {
          best = d;
          arg = static_cast<int>(k);
        }
      }
      labels[i] = arg;
      dist2[i] = best;
    }
  });
  // Fixed-order reduction keeps inertia independent of the thread count.
  double inertia = 0.0;
  for (double d : dist2) inertia += d;
  return inertia;
}

inline RowMatrix kmeans_plus_plus(const RowMatrix& x, int k, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  std::mt19937_64 rng(seed);
  RowMatrix centers(k, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);

  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  centers.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = squared_distance(x, i, centers, 0);

  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = d2[static_cast<std::size_t>(i)];
        if (d <= 0.0) continue;
        acc += d;
        pick = i;
        if (acc > r) break;
      }
    }
    if (pick < 0) {
      // All remaining rows coincide with a chosen center.
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }
    centers.row(c) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = squared_distance(x, i, centers, c);
      auto& slot = d2[static_cast<std::size_t>(i)];
      if (d < slot) slot = d;
    }
  }
  return centers;
}

inline void lloyd(const RowMatrix& x, RowMatrix& centroids, const KMeansOptions& opt, KMeansTrace& trace) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = centroids.rows();
  std::vector<int> labels;
  std::vector<double> dist2;
  trace.inertia_history.clear();
  trace.iterations = 0;

  for (int it = 0; it < opt.max_iter; ++it) {
    trace.inertia_history.push_back(assign_rows(x, centroids, labels, dist2, opt.threads));
    ++trace.iterations;

    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      sums.row(l) += x.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    RowMatrix next = centroids;
    std::vector<Eigen::Index> empty;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0)
        next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      else
        empty.push_back(c);
    }
    if (!empty.empty()) {
      // Reseed each empty cluster with the row farthest from its centroid.
      std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return dist2[static_cast<std::size_t>(a)] > dist2[static_cast<std::size_t>(b)];
      });
      for (std::size_t e = 0; e < empty.size(); ++e) next.row(empty[e]) = x.row(order[e]);
    }
    double shift = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    centroids = std::move(next);
    if (shift < opt.tol) break;
  }
}

inline void check_features(const RowMatrix& x) {
  if (!x.allFinite()) throw InvariantError("k-means input contains non-finite values");
}

}  // namespace detail

inline PseudoLabelModel kmeans_fit(const RowMatrix& features, int num_classes,
                                   const KMeansOptions& opt = {}, KMeansTrace* trace = nullptr) {
  if (num_classes < 1) throw std::invalid_argument("k-means needs at least one cluster");
  if (features.rows() < num_classes)
    throw InvariantError("k-means needs at least as many rows (" + std::to_string(features.rows()) +
                         ") as clusters (" + std::to_string(num_classes) + ")");
  if (opt.max_iter < 1 || opt.restarts < 1) throw std::invalid_argument("max_iter and restarts must be >= 1");
  detail::check_features(features);

  PseudoLabelModel best;
  KMeansTrace best_trace;
  bool have_best = false;
  for (int r = 0; r < opt.restarts; ++r) {
    KMeansTrace local;
    local.restart = r;
    RowMatrix centroids = detail::kmeans_plus_plus(
        features, num_classes, mix_seed(opt.seed ^ mix_seed(static_cast<std::uint64_t>(r))));
    detail::lloyd(features, centroids, opt, local);
    std::vector<double> dist2;
    const double inertia = detail::assign_rows(features, centroids, local.labels, dist2, opt.threads);
    local.inertia_history.push_back(inertia);
    if (!have_best || inertia < best.inertia) {
      best.centroids = std::move(centroids);
      best.inertia = inertia;
      best_trace = std::move(local);
      have_best = true;
    }
  }
  best.seed = opt.seed;
  if (trace) *trace = std::move(best_trace);
  return best;
}

inline std::vector<int> kmeans_assign(const PseudoLabelModel& model, const RowMatrix& features, int threads = 1) {
  if (features.cols() != model.centroids.cols())
    throw std::invalid_argument("feature dimension " + std::to_string(features.cols()) +
                                " does not match model dimension " + std::to_string(model.centroids.cols()));
  detail::check_features(features);
  std::vector<int> labels;
  std::vector<double> dist2;
  detail::assign_rows(features, model.centroids, labels, dist2, threads);
  return labels;
}

// ---------------------------------------------------------------------------
// "PLM1" | u32 C | u32 d | u64 seed | f32 centroids (row-major) | f64 inertia

inline constexpr std::string_view kModelMagic = "PLM1";

inline std::string encode_model(const PseudoLabelModel& model) {
  if (model.centroids.rows() < 1) throw InvariantError("model has no centroids");
  if (!model.centroids.allFinite()) throw InvariantError("model centroids are not finite");
  std::string out;
  out.append(kModelMagic);
  detail::put_le(out, static_cast<std::uint32_t>(model.centroids.rows()));
  detail::put_le(out, static_cast<std::uint32_t>(model.centroids.cols()));
  detail::put_le(out, model.seed);
  for (Eigen::Index i = 0; i < model.centroids.size(); ++i)
    detail::put_le(out, static_cast<float>(model.centroids.data()[i]));
  detail::put_le(out, model.inertia);
  return out;
}

inline PseudoLabelModel decode_model(std::string_view bytes) {
  if (bytes.substr(0, kModelMagic.size()) != kModelMagic) throw FormatError("bad magic: not a PLM1 model");
  detail::ByteReader r(bytes);
  r.take(kModelMagic.size(), "magic");
  const auto c = r.get<std::uint32_t>("class count");
  const auto d = r.get<std::uint32_t>("dimension");
  if (c == 0) throw FormatError("model declares zero classes");
  PseudoLabelModel m;
  m.seed = r.get<std::uint64_t>("seed");
  if (static_cast<std::uint64_t>(c) * d > r.remaining() / 4)
    throw TruncatedError("truncated file while reading centroids");
  m.centroids.resize(c, d);
  for (Eigen::Index i = 0; i < m.centroids.size(); ++i) m.centroids.data()[i] = r.get<float>("centroids");
  m.inertia = r.get<double>("inertia");
  if (r.remaining() != 0) throw FormatError("trailing bytes after model");
  if (!m.centroids.allFinite()) throw InvariantError("model centroids are not finite");
  return m;
}

inline void write_model(const PseudoLabelModel& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_model(model));
}

inline PseudoLabelModel read_model(const std::filesystem::path& path) {
  return decode_model(detail::read_file(path));
}

}  // namespace aptdet
