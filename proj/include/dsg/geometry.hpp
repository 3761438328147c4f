#pragma once

#include <array>

namespace dsg {

// Axis-aligned box in corner form. A box with x2 <= x1 or y2 <= y1 is
// degenerate: zero area, zero overlap with everything.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const;
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

double iou(const Box& a, const Box& b);

// Compact relative layout of b with respect to a: overlap, center offsets
// scaled by a's size, and log size ratios. Degenerate extents are clamped
// to a small positive length so every entry stays finite.
std::array<double, 5> pair_geometry(const Box& a, const Box& b);

}  // namespace dsg
