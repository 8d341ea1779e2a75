#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace handvote {

/// Dense row-major H×W storage. Value-semantic; (y, x) indexing with y down.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, const T& fill = T{})
      : h_(height), w_(width), v_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T& operator()(int y, int x) { return v_[static_cast<std::size_t>(y) * w_ + x]; }
  const T& operator()(int y, int x) const { return v_[static_cast<std::size_t>(y) * w_ + x]; }

  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  bool contains(int y, int x) const { return y >= 0 && y < h_ && x >= 0 && x < w_; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool same_shape(int height, int width) const { return h_ == height && w_ == width; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return h_ == other.height() && w_ == other.width();
  }

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<T> v_;
};

using Mask = Grid<std::uint8_t>;

}  // namespace handvote
