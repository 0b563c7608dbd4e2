#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace nbt {

using CategoryId = int;

/// Axis-aligned box in image-pixel coordinates. Construction rejects
/// non-finite coordinates and boxes without positive area.
class BoundingBox {
 public:
  BoundingBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double x_max() const { return x_max_; }
  double y_max() const { return y_max_; }
  double width() const { return x_max_ - x_min_; }
  double height() const { return y_max_ - y_min_; }
  double area() const { return width() * height(); }
  std::array<double, 4> coords() const { return {x_min_, y_min_, x_max_, y_max_}; }

  /// True when the box lies inside [0, width] x [0, height].
  bool fits_in(double image_width, double image_height) const;

  bool operator==(const BoundingBox&) const = default;

 private:
  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

/// Intersection-over-union, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

/// Normalized corners [x_min/W, y_min/H, x_max/W, y_max/H].
std::array<double, 4> location_feature(const BoundingBox& box, double image_width,
                                       double image_height);

struct RegionProposal {
  BoundingBox box;
  CategoryId category = 0;
  double confidence = 0.0;
  std::vector<double> feature;
  bool is_ground_truth = false;
};

struct FilterThresholds {
  double nms_iou = 0.7;
  double class_iou = 0.3;
  double min_confidence = 0.5;
};

/// Greedy NMS across all proposals at `nms_iou`, then per-category NMS at
/// `class_iou`, then drops proposals below `min_confidence`. Output is sorted
/// by descending confidence; ties keep input order.
std::vector<RegionProposal> filter_proposals(std::span<const RegionProposal> proposals,
                                             const FilterThresholds& thresholds = {});

}  // namespace nbt
