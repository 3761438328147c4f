#include "dsg/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dsg {

namespace {
constexpr double kMinExtent = 1e-6;
}

double Box::area() const {
  return std::max(0.0, width()) * std::max(0.0, height());
}

double iou(const Box& a, const Box& b) {
  const double ax = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ay = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ax * ay;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::array<double, 5> pair_geometry(const Box& a, const Box& b) {
  const double aw = std::max(a.width(), kMinExtent);
  const double ah = std::max(a.height(), kMinExtent);
  const double bw = std::max(b.width(), kMinExtent);
  const double bh = std::max(b.height(), kMinExtent);
  return {iou(a, b), (b.cx() - a.cx()) / aw, (b.cy() - a.cy()) / ah, std::log(bw / aw),
          std::log(bh / ah)};
}

}  // namespace dsg
