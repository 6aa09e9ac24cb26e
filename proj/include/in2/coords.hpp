#pragma once

#include "in2/tensor.hpp"

namespace in2 {

// Per-query normalized positions in [-1,1]^2, cell-center convention.
struct CoordGrid {
    std::int64_t h = 0, w = 0;
    Tensor<double> coords;  // [2, h, w]: plane 0 = y, plane 1 = x

    std::int64_t n_queries() const { return h * w; }
    double y(std::int64_t i, std::int64_t j) const { return coords.at(0, i, j); }
    double x(std::int64_t i, std::int64_t j) const { return coords.at(1, i, j); }
};

// Query pixel extent ratios of Eq-style cell decoding: source dims over
// target dims.
struct Cell {
    double c_h = 1.0;
    double c_w = 1.0;
};

// Cell-center grid: column j sits at -1 + (2j+1)/w, rows analogously.
inline CoordGrid make_coord_grid(std::int64_t h, std::int64_t w) {
    check(h >= 1 && w >= 1, "make_coord_grid: dims must be positive");
    CoordGrid g;
    g.h = h;
    g.w = w;
    g.coords = Tensor<double>(Shape{2, h, w});
    for (std::int64_t i = 0; i < h; ++i) {
        double yc = -1.0 + (2.0 * i + 1.0) / static_cast<double>(h);
        for (std::int64_t j = 0; j < w; ++j) {
            g.coords.at(0, i, j) = yc;
            g.coords.at(1, i, j) = -1.0 + (2.0 * j + 1.0) / static_cast<double>(w);
        }
    }
    return g;
}

inline Cell make_cell(std::int64_t src_h, std::int64_t src_w, std::int64_t tgt_h,
                      std::int64_t tgt_w) {
    check(src_h >= 1 && src_w >= 1 && tgt_h >= 1 && tgt_w >= 1,
          "make_cell: dims must be positive");
    return Cell{static_cast<double>(src_h) / static_cast<double>(tgt_h),
                static_cast<double>(src_w) / static_cast<double>(tgt_w)};
}

}  // namespace in2
