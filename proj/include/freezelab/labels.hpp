#pragma once

namespace freezelab {

// One YOLO annotation: class id and a box in normalized center format.
struct Label {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;

  bool operator==(const Label&) const = default;
};

}  // namespace freezelab
