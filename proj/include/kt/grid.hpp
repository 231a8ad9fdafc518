#pragma once

#include <cstdint>
#include <vector>

#include "kt/error.hpp"

namespace kt {

// Dense row-major 2D grid. Row index = axial (z) pixel, column index = radial (r) pixel.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw ParamError("grid dimensions must be non-negative");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    const T& operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    T* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
    const T* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    template <typename U>
    bool same_shape(const Grid<U>& o) const noexcept {
        return rows_ == o.rows() && cols_ == o.cols();
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using MaskGrid = Grid<uint8_t>;  // 1 = material, 0 = void

constexpr uint8_t kMaterial = 1;
constexpr uint8_t kVoid = 0;

}  // namespace kt
