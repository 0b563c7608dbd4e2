#include "nbt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nbt {

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  const bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
                      std::isfinite(y_max);
  if (!finite || !(x_max > x_min) || !(y_max > y_min)) {
    std::ostringstream msg;
    msg << "invalid bounding box [" << x_min << ", " << y_min << ", " << x_max << ", " << y_max
        << "]: requires x_max > x_min and y_max > y_min";
    throw std::invalid_argument(msg.str());
  }
}

bool BoundingBox::fits_in(double image_width, double image_height) const {
  return x_min_ >= 0.0 && y_min_ >= 0.0 && x_max_ <= image_width && y_max_ <= image_height;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::array<double, 4> location_feature(const BoundingBox& box, double image_width,
                                       double image_height) {
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw std::invalid_argument("location_feature: image dimensions must be positive");
  }
  return {box.x_min() / image_width, box.y_min() / image_height, box.x_max() / image_width,
          box.y_max() / image_height};
}

namespace {

// Indices surviving greedy suppression, in the given order.
std::vector<std::size_t> suppress(std::span<const RegionProposal> proposals,
                                  const std::vector<std::size_t>& order, double threshold,
                                  bool same_category_only) {
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const auto& cand = proposals[idx];
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (same_category_only && proposals[k].category != cand.category) continue;
      if (iou(proposals[k].box, cand.box) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace

std::vector<RegionProposal> filter_proposals(std::span<const RegionProposal> proposals,
                                             const FilterThresholds& thresholds) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].confidence > proposals[b].confidence;
  });

  auto kept = suppress(proposals, order, thresholds.nms_iou, false);
  kept = suppress(proposals, kept, thresholds.class_iou, true);

  std::vector<RegionProposal> out;
  out.reserve(kept.size());
  for (std::size_t idx : kept) {
    if (proposals[idx].confidence >= thresholds.min_confidence) out.push_back(proposals[idx]);
  }
  return out;
}

}  // namespace nbt
