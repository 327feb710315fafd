#pragma once

#include <optional>
#include <string>
#include <vector>

namespace rc::svg {

struct Bar {
  std::string label;
  double value = 0;
  double error = 0;  // half-width of the error whisker; 0 = none
};

struct Group {
  std::string label;
  std::vector<Bar> bars;
};

struct Chart {
  std::string title;
  std::string y_label;
  std::vector<Group> groups;
  std::optional<double> reference;  // dashed horizontal line (e.g. offline accuracy)
  std::string reference_label;
};

/// Static grouped bar chart with value labels.
std::string render(const Chart& chart);

}  // namespace rc::svg
