#pragma once

#include <cstddef>
#include <vector>

namespace deconvparse {

// Integer class-id map, row-major.
struct LabelMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<int> v;

  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, int fill = 0)
      : h(height), w(width), v(height * width, fill) {}

  int& at(std::size_t i, std::size_t j) { return v[i * w + j]; }
  int at(std::size_t i, std::size_t j) const { return v[i * w + j]; }
  std::size_t size() const { return v.size(); }
  bool operator==(const LabelMap&) const = default;
};

}  // namespace deconvparse
