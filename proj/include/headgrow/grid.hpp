#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace headgrow {

/// Dense row-major 2D array indexed as (x, y) with x = column, y = row.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, const T& fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    template <typename U>
    bool same_size(const Grid<U>& other) const {
        return width_ == other.width() && height_ == other.height();
    }

    T& operator()(int x, int y) {
        assert(in_bounds(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    const T& operator()(int x, int y) const {
        assert(in_bounds(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }

    void fill(const T& value) { data_.assign(data_.size(), value); }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using ImageGrid = Grid<float>;      // intensities on the 0..255 scale
using Mask = Grid<std::uint8_t>;    // 0 = invalid/masked-out, nonzero = valid

inline int count_set(const Mask& mask) {
    int n = 0;
    for (auto v : mask) n += (v != 0);
    return n;
}

inline Mask mask_and(const Mask& a, const Mask& b) {
    assert(a.same_size(b));
    Mask out(a.width(), a.height(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 255 : 0;
    return out;
}

}  // namespace headgrow
