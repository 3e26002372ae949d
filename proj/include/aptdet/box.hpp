// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>

namespace aptdet {

// Axis-aligned box as (x, y, w, h) with (x, y) the top-left corner.
// Units depend on context: normalized [0,1] for proposals and predictions,
// absolute pixels inside AnnotatedImage.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }

  bool operator==(const Box&) const = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

// Smallest box containing both inputs.
inline Box enclosing_box(const Box& a, const Box& b) {
  const double x0 = std::min(a.x, b.x);
  const double y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.right(), b.right());
  const double y1 = std::max(a.bottom(), b.bottom());
  // return an input verbatim when it already covers the other; x1 - x0 can drift by an ulp
  for (const Box* c : {&a, &b})
    if (c->x == x0 && c->y == y0 && c->right() == x1 && c->bottom() == y1) return *c;
  return {x0, y0, x1 - x0, y1 - y0};
}

// Generalized IoU: IoU minus the fraction of the enclosing box not covered
// by the union. Lies in [-1, 1] and never exceeds iou(a, b).
inline double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclosure = enclosing_box(a, b).area();
  if (uni <= 0.0 || enclosure <= 0.0) return 0.0;
  const double plain = inter / uni;
  return plain - (enclosure - uni) / enclosure;
}

// (cx, cy, w, h) form used by the L1 regression term.
inline std::array<double, 4> to_center_form(const Box& b) {
  return {b.x + 0.5 * b.w, b.y + 0.5 * b.h, b.w, b.h};
}

}  // namespace aptdet
