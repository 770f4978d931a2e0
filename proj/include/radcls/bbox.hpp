#pragma once

namespace radcls {

// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

}  // namespace radcls
