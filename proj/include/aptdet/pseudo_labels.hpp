// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "aptdet/kmeans.hpp"
#include "aptdet/regions.hpp"
#include "aptdet/tensor_store.hpp"

namespace aptdet {

struct ImageProposals {
  std::string image_id;
  int width = 0;  // pixels
  int height = 0;
  std::vector<Proposal> proposals;
};

// Normalized box -> absolute pixels, clipped to the image.
inline Box to_pixels(const Box& b, int width, int height) {
  const double x = std::clamp(b.x * width, 0.0, static_cast<double>(width));
  const double y = std::clamp(b.y * height, 0.0, static_cast<double>(height));
  const double w = std::min(b.w * width, width - x);
  const double h = std::min(b.h * height, height - y);
  return {x, y, w, h};
}

inline Box to_normalized(const Box& b, int width, int height) {
  return {b.x / width, b.y / height, b.w / width, b.h / height};
}

// Stacks descriptors into an N x d matrix in image order, then proposal order.
inline RowMatrix descriptor_matrix(std::span<const ImageProposals> images) {
  std::size_t rows = 0, dim = 0;
  for (const auto& img : images) {
    rows += img.proposals.size();
    for (const auto& p : img.proposals) {
      if (dim == 0) dim = p.descriptor.size();
      if (p.descriptor.size() != dim) throw std::invalid_argument("descriptors have inconsistent dimension");
    }
  }
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  Eigen::Index r = 0;
  for (const auto& img : images)
    for (const auto& p : img.proposals) {
      for (std::size_t c = 0; c < dim; ++c) m(r, static_cast<Eigen::Index>(c)) = p.descriptor[c];
      ++r;
    }
  return m;
}

inline void l2_normalize_rows(RowMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
}

// One annotation per proposal labelled by its nearest centroid. Images
// without proposals are kept with empty annotation lists.
inline std::vector<AnnotatedImage> build_training_set(std::span<const ImageProposals> images,
                                                      const PseudoLabelModel& model, int threads = 1) {
  std::vector<AnnotatedImage> out;
  out.reserve(images.size());
  const RowMatrix features = descriptor_matrix(images);
  const std::vector<int> labels =
      features.rows() > 0 ? kmeans_assign(model, features, threads) : std::vector<int>{};
  std::size_t next = 0;
  for (const auto& img : images) {
    AnnotatedImage a;
    a.image_id = img.image_id;
    a.width = img.width;
    a.height = img.height;
    for (const auto& p : img.proposals) {
      a.boxes.push_back(to_pixels(p.box, img.width, img.height));
      a.labels.push_back(labels[next++]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace aptdet
