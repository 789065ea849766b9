#pragma once

#include <cstddef>
#include <vector>

#include "adaug/core.hpp"

namespace adaug {

/// Batched activations stored channel-major: [channel][sample][row][col].
///
/// Keeping each channel contiguous across the batch lets a convolution run as
/// a single GEMM and batch-norm reduce over one contiguous span per channel.
template <typename T>
struct Tensor {
    int c = 0, n = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int batch, int height, int width, T fill = T{})
        : c(channels), n(batch), h(height), w(width),
          data(static_cast<std::size_t>(channels) * batch * height * width, fill) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t channel_size() const noexcept { return static_cast<std::size_t>(n) * h * w; }
    std::size_t size() const noexcept { return data.size(); }
    T* channel(int ci) noexcept { return data.data() + ci * channel_size(); }
    const T* channel(int ci) const noexcept { return data.data() + ci * channel_size(); }
    T& at(int ci, int ni, int y, int x) noexcept {
        return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x];
    }
    const T& at(int ci, int ni, int y, int x) const noexcept {
        return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x];
    }
    bool same_shape(const Tensor& o) const noexcept { return c == o.c && n == o.n && h == o.h && w == o.w; }
};

}  // namespace adaug
