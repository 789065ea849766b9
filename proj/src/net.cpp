#include "adaug/net.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "adaug/rng.hpp"

namespace adaug {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// col[(ci*9 + ky*3 + kx)][n*H*W + y*W + x] = x[ci][n][y+ky-1][x+kx-1], zero outside the frame.
template <typename T>
void im2col3(const Tensor<T>& x, std::vector<T>& col) {
    const int H = x.h, W = x.w;
    const std::size_t M = x.channel_size(), HW = x.plane();
    col.resize(static_cast<std::size_t>(x.c) * 9 * M);
    for (int ci = 0; ci < x.c; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * M;
                const int dy = ky - 1, dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                for (int n = 0; n < x.n; ++n)
                    for (int y = 0; y < H; ++y) {
                        T* dst = row + n * HW + static_cast<std::size_t>(y) * W;
                        const int ys = y + dy;
                        if (ys < 0 || ys >= H) {
                            std::fill(dst, dst + W, T{});
                            continue;
                        }
                        const T* src = x.channel(ci) + n * HW + static_cast<std::size_t>(ys) * W;
                        std::fill(dst, dst + x0, T{});
                        std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
                        std::fill(dst + x1, dst + W, T{});
                    }
            }
}

template <typename T>
void col2im3(const std::vector<T>& col, Tensor<T>& dx_out) {
    const int H = dx_out.h, W = dx_out.w;
    const std::size_t M = dx_out.channel_size(), HW = dx_out.plane();
    std::fill(dx_out.data.begin(), dx_out.data.end(), T{});
    for (int ci = 0; ci < dx_out.c; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * M;
                const int dy = ky - 1, dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                for (int n = 0; n < dx_out.n; ++n)
                    for (int y = 0; y < H; ++y) {
                        const int ys = y + dy;
                        if (ys < 0 || ys >= H) continue;
                        const T* src = row + n * HW + static_cast<std::size_t>(y) * W;
                        T* dst = dx_out.channel(ci) + n * HW + static_cast<std::size_t>(ys) * W;
                        for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
                    }
            }
}

enum class BlockKind : std::uint8_t { conv, deconv, head };

struct BlockDesc {
    std::string name;
    BlockKind kind;
    int cin, cout, ksize;
    bool relu, bn, dropout;
    int kernel = -1, bias = -1, scale = -1, shift = -1, rmean = -1, rvar = -1;
};

template <typename T>
struct BlockCache {
    Tensor<T> input;       // conv input (k=1) or deconv input
    std::vector<T> col;    // im2col of the input (k=3)
    Tensor<T> act;         // post-ReLU activation
    std::vector<T> xhat;   // normalized activation
    std::vector<T> inv_std, batch_mean, batch_var;
    std::vector<T> mask;   // dropout multipliers
    int in_c = 0, in_h = 0, in_w = 0;
};

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.n, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < x.n; ++n)
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j) y.at(c, n, i, j) = x.at(c, n, i / 2, j / 2);
    return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.c, dy.n, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c)
        for (int n = 0; n < dy.n; ++n)
            for (int i = 0; i < dy.h; ++i)
                for (int j = 0; j < dy.w; ++j) dx.at(c, n, i / 2, j / 2) += dy.at(c, n, i, j);
    return dx;
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
    Tensor<T> y(x.c, x.n, x.h / 2, x.w / 2);
    if (argmax) argmax->resize(y.size());
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < x.n; ++n)
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j, ++o) {
                    std::size_t base = ((static_cast<std::size_t>(c) * x.n + n) * x.h + 2 * i) * x.w + 2 * j;
                    std::size_t cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
                    std::size_t best = cand[0];
                    for (int k = 1; k < 4; ++k)
                        if (x.data[cand[k]] > x.data[best]) best = cand[k];
                    y.data[o] = x.data[best];
                    if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
                }
    return y;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> y(a.c + b.c, a.n, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return y;
}

template <typename T>
void split(const Tensor<T>& dy, int first_c, Tensor<T>& da, Tensor<T>& db) {
    da = Tensor<T>(first_c, dy.n, dy.h, dy.w);
    db = Tensor<T>(dy.c - first_c, dy.n, dy.h, dy.w);
    std::copy(dy.data.begin(), dy.data.begin() + static_cast<std::ptrdiff_t>(da.size()), da.data.begin());
    std::copy(dy.data.begin() + static_cast<std::ptrdiff_t>(da.size()), dy.data.end(), db.data.begin());
}

}  // namespace

UpsampleMode parse_upsample_mode(const std::string& s) {
    if (s == "transposed") return UpsampleMode::transposed;
    if (s == "nearest_conv") return UpsampleMode::nearest_conv;
    throw std::invalid_argument("unknown upsample mode '" + s + "'");
}

const char* upsample_mode_name(UpsampleMode m) noexcept {
    return m == UpsampleMode::transposed ? "transposed" : "nearest_conv";
}

std::vector<int> NetworkConfig::encoder_channels() const {
    std::vector<int> ch;
    for (int base : {64, 128, 256, 512, 1024}) {
        double c = base / width_factor;
        if (!(width_factor > 0) || std::abs(c - std::round(c)) > 1e-9 || std::round(c) < 4)
            throw RangeError("width_factor " + std::to_string(width_factor) +
                             " yields a non-integral or < 4 channel count");
        ch.push_back(static_cast<int>(std::round(c)));
    }
    return ch;
}

void NetworkConfig::validate() const {
    encoder_channels();
    if (num_classes < 2) throw RangeError("need at least two classes");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw RangeError("dropout rate must lie in [0, 1)");
    if (input_height <= 0 || input_width <= 0 || input_height % 16 || input_width % 16)
        throw ShapeError("input dimensions must be positive multiples of 16");
    if (!(bn_momentum >= 0 && bn_momentum < 1) || !(bn_epsilon > 0)) throw RangeError("invalid batch-norm constants");
}

template <typename T>
struct SegmentationNetT<T>::Impl {
    std::vector<BlockDesc> blocks;
    std::vector<BlockCache<T>> caches;
    std::vector<std::vector<std::uint32_t>> pool_idx{4};
    std::array<bool, 4> skip_enabled{true, true, true, true};
    bool has_cache = false;
    int batch = 0;

    // Block indices.
    std::array<int, 5> enc_a{}, enc_b{};
    std::array<int, 4> up{}, dec_a{}, dec_b{};  // index 0 = level 1 (full resolution)
    int head = -1;

    const BlockDesc& block(int i) const { return blocks[static_cast<std::size_t>(i)]; }

    Tensor<T> block_forward(int bi, const std::vector<Parameter<T>>& params, const Tensor<T>& x, Mode mode,
                            BlockCache<T>* cache, std::uint64_t seed, double dropout_rate, double eps) const;
    Tensor<T> block_backward(int bi, std::vector<Parameter<T>>& params, Tensor<T> dy, BlockCache<T>& cache,
                             bool need_dx) const;
};

template <typename T>
Tensor<T> SegmentationNetT<T>::Impl::block_forward(int bi, const std::vector<Parameter<T>>& params,
                                                   const Tensor<T>& x_in, Mode mode, BlockCache<T>* cache,
                                                   std::uint64_t seed, double dropout_rate, double eps) const {
    const BlockDesc& b = block(bi);
    const Tensor<T>* xp = &x_in;
    Tensor<T> upsampled;
    if (b.kind == BlockKind::conv && b.name.rfind("up", 0) == 0) {
        upsampled = upsample_nearest(x_in);
        xp = &upsampled;
    }
    const Tensor<T>& x = *xp;
    if (x.c != b.cin) throw ShapeError("channel mismatch entering block " + b.name);
    const auto& kernel = params[static_cast<std::size_t>(b.kernel)].value;
    const auto& bias = params[static_cast<std::size_t>(b.bias)].value;
    Tensor<T> y;

    if (b.kind == BlockKind::deconv) {
        const std::size_t Min = x.channel_size();
        RowMat<T> Z(b.cout * 4, static_cast<Eigen::Index>(Min));
        Z.noalias() = ConstMatMap<T>(kernel.data(), b.cout * 4, b.cin) * ConstMatMap<T>(x.data.data(), b.cin, Min);
        y = Tensor<T>(b.cout, x.n, x.h * 2, x.w * 2);
        for (int co = 0; co < b.cout; ++co)
            for (int a = 0; a < 2; ++a)
                for (int bb = 0; bb < 2; ++bb) {
                    const T* row = Z.data() + (static_cast<std::size_t>(co) * 4 + a * 2 + bb) * Min;
                    for (int n = 0; n < x.n; ++n)
                        for (int i = 0; i < x.h; ++i) {
                            const T* src = row + (static_cast<std::size_t>(n) * x.h + i) * x.w;
                            T* dst = &y.at(co, n, 2 * i + a, bb);
                            for (int j = 0; j < x.w; ++j) dst[2 * j] = src[j] + bias[co];
                        }
                }
        if (cache) cache->input = x;
    } else {
        const std::size_t M = x.channel_size();
        const int K = b.cin * b.ksize * b.ksize;
        std::vector<T> local;
        const T* colp;
        if (b.ksize == 3) {
            std::vector<T>& col = cache ? cache->col : local;
            im2col3(x, col);
            colp = col.data();
        } else {
            if (cache) cache->input = x;
            colp = x.data.data();
        }
        y = Tensor<T>(b.cout, x.n, x.h, x.w);
        MatMap<T> Y(y.data.data(), b.cout, static_cast<Eigen::Index>(M));
        Y.noalias() = ConstMatMap<T>(kernel.data(), b.cout, K) * ConstMatMap<T>(colp, K, M);
        for (int co = 0; co < b.cout; ++co) {
            T* ch = y.channel(co);
            const T bv = bias[co];
            for (std::size_t i = 0; i < M; ++i) ch[i] += bv;
        }
    }
    if (cache) {
        cache->in_c = x_in.c;
        cache->in_h = x_in.h;
        cache->in_w = x_in.w;
    }

    if (b.relu)
        for (auto& v : y.data) v = v > T{} ? v : T{};
    if (b.bn) {
        if (cache) cache->act = y;
        const std::size_t M = y.channel_size();
        const auto& scale = params[static_cast<std::size_t>(b.scale)].value;
        const auto& shift = params[static_cast<std::size_t>(b.shift)].value;
        if (mode == Mode::train) {
            if (cache) {
                cache->xhat.resize(y.size());
                cache->inv_std.resize(b.cout);
                cache->batch_mean.resize(b.cout);
                cache->batch_var.resize(b.cout);
            }
            for (int c = 0; c < b.cout; ++c) {
                T* ch = y.channel(c);
                double mean = 0;
                for (std::size_t i = 0; i < M; ++i) mean += ch[i];
                mean /= static_cast<double>(M);
                double var = 0;
                for (std::size_t i = 0; i < M; ++i) var += (ch[i] - mean) * (ch[i] - mean);
                var /= static_cast<double>(M);
                const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
                const T mu = static_cast<T>(mean);
                for (std::size_t i = 0; i < M; ++i) {
                    const T xh = (ch[i] - mu) * inv;
                    if (cache) cache->xhat[c * M + i] = xh;
                    ch[i] = scale[c] * xh + shift[c];
                }
                if (cache) {
                    cache->inv_std[c] = inv;
                    cache->batch_mean[c] = mu;
                    cache->batch_var[c] = static_cast<T>(M > 1 ? var * M / (M - 1) : var);
                }
            }
        } else {
            const auto& rmean = params[static_cast<std::size_t>(b.rmean)].value;
            const auto& rvar = params[static_cast<std::size_t>(b.rvar)].value;
            for (int c = 0; c < b.cout; ++c) {
                T* ch = y.channel(c);
                const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rvar[c]) + eps));
                const T g = scale[c] * inv, o = shift[c] - rmean[c] * scale[c] * inv;
                for (std::size_t i = 0; i < M; ++i) ch[i] = g * ch[i] + o;
            }
        }
    } else if (cache && b.relu) {
        cache->act = y;
    }
    if (b.dropout && mode == Mode::train && dropout_rate > 0) {
        Rng rng(derive_seed(seed, b.name));
        const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout_rate));
        std::vector<T> local_mask;
        std::vector<T>& mask = cache ? cache->mask : local_mask;
        mask.resize(y.size());
        constexpr double kInv53 = 1.0 / 9007199254740992.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double u = static_cast<double>(rng() >> 11) * kInv53;
            mask[i] = u >= dropout_rate ? keep_scale : T{};
            y.data[i] *= mask[i];
        }
    } else if (cache) {
        cache->mask.clear();
    }
    return y;
}

template <typename T>
Tensor<T> SegmentationNetT<T>::Impl::block_backward(int bi, std::vector<Parameter<T>>& params, Tensor<T> dy,
                                                    BlockCache<T>& cache, bool need_dx) const {
    const BlockDesc& b = block(bi);
    if (!cache.mask.empty())
        for (std::size_t i = 0; i < dy.size(); ++i) dy.data[i] *= cache.mask[i];
    if (b.bn) {
        const std::size_t M = dy.channel_size();
        const auto& scale = params[static_cast<std::size_t>(b.scale)].value;
        auto& dscale = params[static_cast<std::size_t>(b.scale)].grad;
        auto& dshift = params[static_cast<std::size_t>(b.shift)].grad;
        for (int c = 0; c < b.cout; ++c) {
            T* d = dy.channel(c);
            const T* xh = cache.xhat.data() + c * M;
            double sum_d = 0, sum_dx = 0;
            for (std::size_t i = 0; i < M; ++i) {
                sum_d += d[i];
                sum_dx += d[i] * xh[i];
            }
            dscale[c] += static_cast<T>(sum_dx);
            dshift[c] += static_cast<T>(sum_d);
            const double k = static_cast<double>(scale[c]) * cache.inv_std[c] / static_cast<double>(M);
            const double md = sum_d, mdx = sum_dx;
            for (std::size_t i = 0; i < M; ++i)
                d[i] = static_cast<T>(k * (static_cast<double>(M) * d[i] - md - xh[i] * mdx));
        }
    }
    if (b.relu)
        for (std::size_t i = 0; i < dy.size(); ++i)
            if (!(cache.act.data[i] > T{})) dy.data[i] = T{};

    auto& kgrad = params[static_cast<std::size_t>(b.kernel)].grad;
    auto& bgrad = params[static_cast<std::size_t>(b.bias)].grad;
    const auto& kernel = params[static_cast<std::size_t>(b.kernel)].value;

    if (b.kind == BlockKind::deconv) {
        const Tensor<T>& x = cache.input;
        const std::size_t Min = x.channel_size();
        RowMat<T> dZ(b.cout * 4, static_cast<Eigen::Index>(Min));
        for (int co = 0; co < b.cout; ++co) {
            double bsum = 0;
            for (int a = 0; a < 2; ++a)
                for (int bb = 0; bb < 2; ++bb) {
                    T* row = dZ.data() + (static_cast<std::size_t>(co) * 4 + a * 2 + bb) * Min;
                    for (int n = 0; n < x.n; ++n)
                        for (int i = 0; i < x.h; ++i) {
                            T* dst = row + (static_cast<std::size_t>(n) * x.h + i) * x.w;
                            const T* src = &dy.at(co, n, 2 * i + a, bb);
                            for (int j = 0; j < x.w; ++j) {
                                dst[j] = src[2 * j];
                                bsum += src[2 * j];
                            }
                        }
                }
            bgrad[co] += static_cast<T>(bsum);
        }
        MatMap<T>(kgrad.data(), b.cout * 4, b.cin).noalias() +=
            dZ * ConstMatMap<T>(x.data.data(), b.cin, Min).transpose();
        if (!need_dx) return {};
        Tensor<T> dx(b.cin, x.n, x.h, x.w);
        MatMap<T>(dx.data.data(), b.cin, Min).noalias() =
            ConstMatMap<T>(kernel.data(), b.cout * 4, b.cin).transpose() * dZ;
        return dx;
    }

    const std::size_t M = dy.channel_size();
    const int K = b.cin * b.ksize * b.ksize;
    for (int co = 0; co < b.cout; ++co) {
        const T* d = dy.channel(co);
        double s = 0;
        for (std::size_t i = 0; i < M; ++i) s += d[i];
        bgrad[co] += static_cast<T>(s);
    }
    const T* colp = b.ksize == 3 ? cache.col.data() : cache.input.data.data();
    ConstMatMap<T> dY(dy.data.data(), b.cout, M);
    MatMap<T>(kgrad.data(), b.cout, K).noalias() += dY * ConstMatMap<T>(colp, K, M).transpose();
    if (!need_dx) return {};
    const bool upsampled = b.name.rfind("up", 0) == 0;
    const int h = upsampled ? cache.in_h * 2 : cache.in_h;
    const int w = upsampled ? cache.in_w * 2 : cache.in_w;
    Tensor<T> dx(b.cin, dy.n, h, w);
    if (b.ksize == 3) {
        std::vector<T> dcol(static_cast<std::size_t>(K) * M);
        MatMap<T>(dcol.data(), K, M).noalias() = ConstMatMap<T>(kernel.data(), b.cout, K).transpose() * dY;
        col2im3(dcol, dx);
    } else {
        MatMap<T>(dx.data.data(), K, M).noalias() = ConstMatMap<T>(kernel.data(), b.cout, K).transpose() * dY;
    }
    return upsampled ? upsample_nearest_backward(dx) : dx;
}

template <typename T>
SegmentationNetT<T>::SegmentationNetT(const NetworkConfig& config) : config_(config), impl_(std::make_unique<Impl>()) {
    config_.validate();
    const auto ch = config_.encoder_channels();
    auto& blocks = impl_->blocks;
    auto add = [&](std::string name, BlockKind kind, int cin, int cout, int k, bool relu, bool bn, bool drop) {
        blocks.push_back({std::move(name), kind, cin, cout, k, relu, bn, drop});
        return static_cast<int>(blocks.size()) - 1;
    };
    int cin = 1;
    for (int l = 0; l < 5; ++l) {
        const std::string lvl = "enc" + std::to_string(l + 1);
        impl_->enc_a[l] = add(lvl + "a", BlockKind::conv, cin, ch[l], 3, true, false, false);
        impl_->enc_b[l] = add(lvl + "b", BlockKind::conv, ch[l], ch[l], 3, true, true, false);
        cin = ch[l];
    }
    for (int l = 3; l >= 0; --l) {
        const std::string lvl = std::to_string(l + 1);
        if (config_.upsample == UpsampleMode::transposed)
            impl_->up[l] = add("up" + lvl, BlockKind::deconv, cin, ch[l], 2, false, false, false);
        else
            impl_->up[l] = add("up" + lvl, BlockKind::conv, cin, ch[l], 3, false, false, false);
        // Level 4: C -> CB; levels 3,2: C -> CBD; level 1: CD -> C.
        const bool first_drop = l == 0;
        const bool second_bn = l >= 1;
        const bool second_drop = l == 1 || l == 2;
        impl_->dec_a[l] = add("dec" + lvl + "a", BlockKind::conv, 2 * ch[l], ch[l], 3, true, false, first_drop);
        impl_->dec_b[l] = add("dec" + lvl + "b", BlockKind::conv, ch[l], ch[l], 3, true, second_bn, second_drop);
        cin = ch[l];
    }
    impl_->head = add("head", BlockKind::head, ch[0], config_.num_classes, 1, false, false, false);

    for (auto& b : blocks) {
        const std::string layer = b.kind == BlockKind::deconv ? ".deconv" : ".conv";
        const int fan_in = b.kind == BlockKind::deconv ? b.cin : b.cin * b.ksize * b.ksize;
        std::vector<int> kshape = b.kind == BlockKind::deconv ? std::vector<int>{b.cout, 2, 2, b.cin}
                                                             : std::vector<int>{b.cout, b.cin, b.ksize, b.ksize};
        std::size_t ksize = 1;
        for (int d : kshape) ksize *= static_cast<std::size_t>(d);
        Parameter<T> kernel{b.name + layer + ".kernel", kshape, std::vector<T>(ksize), std::vector<T>(ksize), true};
        Rng rng(derive_seed(config_.init_seed, kernel.name));
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : kernel.value) v = static_cast<T>(dist(rng));
        b.kernel = static_cast<int>(params_.size());
        params_.push_back(std::move(kernel));
        b.bias = static_cast<int>(params_.size());
        params_.push_back({b.name + layer + ".bias", {b.cout}, std::vector<T>(b.cout), std::vector<T>(b.cout), true});
        if (b.bn) {
            const auto n = static_cast<std::size_t>(b.cout);
            b.scale = static_cast<int>(params_.size());
            params_.push_back({b.name + ".bn.scale", {b.cout}, std::vector<T>(n, T{1}), std::vector<T>(n), true});
            b.shift = static_cast<int>(params_.size());
            params_.push_back({b.name + ".bn.shift", {b.cout}, std::vector<T>(n), std::vector<T>(n), true});
            b.rmean = static_cast<int>(params_.size());
            params_.push_back({b.name + ".bn.running_mean", {b.cout}, std::vector<T>(n), std::vector<T>(n), false});
            b.rvar = static_cast<int>(params_.size());
            params_.push_back({b.name + ".bn.running_var", {b.cout}, std::vector<T>(n, T{1}), std::vector<T>(n), false});
        }
    }
    impl_->caches.resize(blocks.size());
}

template <typename T>
SegmentationNetT<T>::~SegmentationNetT() = default;
template <typename T>
SegmentationNetT<T>::SegmentationNetT(const SegmentationNetT& o)
    : config_(o.config_), params_(o.params_), impl_(std::make_unique<Impl>(*o.impl_)) {}
template <typename T>
SegmentationNetT<T>& SegmentationNetT<T>::operator=(const SegmentationNetT& o) {
    if (this != &o) {
        config_ = o.config_;
        params_ = o.params_;
        impl_ = std::make_unique<Impl>(*o.impl_);
    }
    return *this;
}
template <typename T>
SegmentationNetT<T>::SegmentationNetT(SegmentationNetT&&) noexcept = default;
template <typename T>
SegmentationNetT<T>& SegmentationNetT<T>::operator=(SegmentationNetT&&) noexcept = default;

template <typename T>
Parameter<T>& SegmentationNetT<T>::parameter(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw std::invalid_argument("no parameter named '" + name + "'");
}

template <typename T>
const Parameter<T>& SegmentationNetT<T>::parameter(const std::string& name) const {
    return const_cast<SegmentationNetT*>(this)->parameter(name);
}

template <typename T>
void SegmentationNetT<T>::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T{});
}

template <typename T>
std::size_t SegmentationNetT<T>::count_parameters() const noexcept {
    return adaug::count_parameters(params_);
}

template <typename T>
void SegmentationNetT<T>::set_skip_enabled(int level, bool enabled) {
    if (level < 1 || level > 4) throw RangeError("skip level must be 1..4");
    impl_->skip_enabled[static_cast<std::size_t>(level - 1)] = enabled;
}

namespace {

void check_input(const NetworkConfig&, int c, int h, int w) {
    if (c != 1) throw ShapeError("network input must have one channel");
    if (h <= 0 || w <= 0 || h % 16 != 0 || w % 16 != 0)
        throw ShapeError("input dimensions " + std::to_string(h) + "x" + std::to_string(w) +
                         " are not multiples of 16");
}

// Shared forward pass; cache is null in eval mode.
template <typename T, typename Impl>
Tensor<T> run_forward(const Impl& im, const std::vector<Parameter<T>>& params, const NetworkConfig& cfg,
                      const Tensor<T>& input, Mode mode, std::vector<BlockCache<T>>* caches,
                      std::vector<std::vector<std::uint32_t>>* pool_idx, std::uint64_t seed) {
    check_input(cfg, input.c, input.h, input.w);
    auto fwd = [&](int bi, const Tensor<T>& x) {
        return im.block_forward(bi, params, x, mode, caches ? &(*caches)[static_cast<std::size_t>(bi)] : nullptr,
                                seed, cfg.dropout_rate, cfg.bn_epsilon);
    };
    std::array<Tensor<T>, 4> skips;
    Tensor<T> x = input;
    for (int l = 0; l < 5; ++l) {
        x = fwd(im.enc_a[l], x);
        x = fwd(im.enc_b[l], x);
        if (l < 4) {
            skips[l] = x;
            x = maxpool2(x, pool_idx ? &(*pool_idx)[static_cast<std::size_t>(l)] : nullptr);
        }
    }
    for (int l = 3; l >= 0; --l) {
        Tensor<T> u = fwd(im.up[l], x);
        if (!im.skip_enabled[static_cast<std::size_t>(l)]) std::fill(skips[l].data.begin(), skips[l].data.end(), T{});
        x = fwd(im.dec_a[l], concat(skips[l], u));
        x = fwd(im.dec_b[l], x);
    }
    return fwd(im.head, x);
}

}  // namespace

template <typename T>
Tensor<T> SegmentationNetT<T>::forward_train(const Tensor<T>& input, std::uint64_t dropout_seed) {
    Tensor<T> out = run_forward<T>(*impl_, params_, config_, input, Mode::train, &impl_->caches, &impl_->pool_idx,
                                   dropout_seed);
    impl_->has_cache = true;
    impl_->batch = input.n;
    const T m = static_cast<T>(config_.bn_momentum);
    for (std::size_t bi = 0; bi < impl_->blocks.size(); ++bi) {
        const auto& b = impl_->blocks[bi];
        if (!b.bn) continue;
        auto& rmean = params_[static_cast<std::size_t>(b.rmean)].value;
        auto& rvar = params_[static_cast<std::size_t>(b.rvar)].value;
        const auto& c = impl_->caches[bi];
        for (int k = 0; k < b.cout; ++k) {
            rmean[k] = m * rmean[k] + (T{1} - m) * c.batch_mean[k];
            rvar[k] = m * rvar[k] + (T{1} - m) * c.batch_var[k];
        }
    }
    return out;
}

template <typename T>
void SegmentationNetT<T>::recalibrate_batch_norm(std::span<const Tensor<T>> batches) {
    if (batches.empty()) return;
    NetworkConfig cfg = config_;
    cfg.dropout_rate = 0.0;
    std::vector<BlockCache<T>> caches(impl_->blocks.size());
    std::vector<std::vector<std::uint32_t>> pool_idx(4);
    const std::size_t nb = impl_->blocks.size();
    std::vector<std::vector<double>> sum(nb), sumsq(nb);
    std::vector<double> count(nb, 0.0);
    for (const auto& batch : batches) {
        run_forward<T>(*impl_, params_, cfg, batch, Mode::train, &caches, &pool_idx, 0);
        for (std::size_t bi = 0; bi < nb; ++bi) {
            const auto& b = impl_->blocks[bi];
            if (!b.bn) continue;
            const auto& c = caches[bi];
            const double M = static_cast<double>(c.act.channel_size());
            sum[bi].resize(b.cout);
            sumsq[bi].resize(b.cout);
            for (int k = 0; k < b.cout; ++k) {
                const double mean = c.batch_mean[k];
                const double var = M > 1 ? c.batch_var[k] * (M - 1) / M : c.batch_var[k];
                sum[bi][k] += M * mean;
                sumsq[bi][k] += M * (var + mean * mean);
            }
            count[bi] += M;
        }
    }
    for (std::size_t bi = 0; bi < nb; ++bi) {
        const auto& b = impl_->blocks[bi];
        if (!b.bn) continue;
        auto& rmean = params_[static_cast<std::size_t>(b.rmean)].value;
        auto& rvar = params_[static_cast<std::size_t>(b.rvar)].value;
        const double N = count[bi];
        for (int k = 0; k < b.cout; ++k) {
            const double mean = sum[bi][k] / N;
            const double var = std::max(0.0, sumsq[bi][k] / N - mean * mean);
            rmean[k] = static_cast<T>(mean);
            rvar[k] = static_cast<T>(N > 1 ? var * N / (N - 1) : var);
        }
    }
}

template <typename T>
Tensor<T> SegmentationNetT<T>::forward_eval(const Tensor<T>& input) const {
    return run_forward<T>(*impl_, params_, config_, input, Mode::eval, nullptr, nullptr, 0);
}

template <typename T>
Tensor<T> SegmentationNetT<T>::forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed) {
    return mode == Mode::train ? forward_train(input, dropout_seed) : forward_eval(input);
}

template <typename T>
void SegmentationNetT<T>::backward(const Tensor<T>& dlogits) {
    if (!impl_->has_cache) throw std::logic_error("backward() without a preceding forward_train()");
    auto& im = *impl_;
    auto bwd = [&](int bi, Tensor<T> dy, bool need_dx = true) {
        return im.block_backward(bi, params_, std::move(dy), im.caches[static_cast<std::size_t>(bi)], need_dx);
    };
    Tensor<T> d = bwd(im.head, dlogits);
    std::array<Tensor<T>, 4> dskips;
    for (int l = 0; l < 4; ++l) {
        d = bwd(im.dec_b[l], std::move(d));
        d = bwd(im.dec_a[l], std::move(d));
        Tensor<T> du;
        split(d, im.block(im.dec_a[l]).cin / 2, dskips[l], du);
        if (!im.skip_enabled[static_cast<std::size_t>(l)])
            std::fill(dskips[l].data.begin(), dskips[l].data.end(), T{});
        d = bwd(im.up[l], std::move(du));
    }
    for (int l = 4; l >= 0; --l) {
        if (l < 4) {
            // Max-pool backward into the skip gradient.
            Tensor<T> ds = std::move(dskips[l]);
            const auto& idx = im.pool_idx[static_cast<std::size_t>(l)];
            for (std::size_t o = 0; o < idx.size(); ++o) ds.data[idx[o]] += d.data[o];
            d = std::move(ds);
        }
        d = bwd(im.enc_b[l], std::move(d));
        d = bwd(im.enc_a[l], std::move(d), l > 0);
    }
}

float normalize_hu(float hu) noexcept {
    constexpr float lo = -160.0f, hi = 240.0f;
    return (std::clamp(hu, lo, hi) - lo) / (hi - lo);
}

template <typename T>
Tensor<T> make_batch(std::span<const CTSlice* const> slices) {
    if (slices.empty()) throw ShapeError("empty batch");
    const int h = slices[0]->height(), w = slices[0]->width();
    Tensor<T> t(1, static_cast<int>(slices.size()), h, w);
    for (std::size_t n = 0; n < slices.size(); ++n) {
        const auto& px = slices[n]->pixels();
        if (px.height() != h || px.width() != w) throw ShapeError("batch slices differ in size");
        T* dst = t.data.data() + n * t.plane();
        for (std::size_t i = 0; i < px.size(); ++i) dst[i] = static_cast<T>(normalize_hu(px[i]));
    }
    return t;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> p(logits.c, logits.n, logits.h, logits.w);
    const std::size_t M = logits.channel_size();
    for (std::size_t i = 0; i < M; ++i) {
        T mx = logits.data[i];
        for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.data[c * M + i]);
        T sum{};
        for (int c = 0; c < logits.c; ++c) {
            const T e = std::exp(logits.data[c * M + i] - mx);
            p.data[c * M + i] = e;
            sum += e;
        }
        for (int c = 0; c < logits.c; ++c) p.data[c * M + i] /= sum;
    }
    return p;
}

template <typename T>
Prediction to_prediction(const Tensor<T>& probs, int sample) {
    Prediction pred{probs.h, probs.w, probs.c, {}};
    pred.probs.resize(probs.plane() * probs.c);
    const std::size_t M = probs.channel_size(), off = static_cast<std::size_t>(sample) * probs.plane();
    for (std::size_t i = 0; i < probs.plane(); ++i)
        for (int c = 0; c < probs.c; ++c)
            pred.probs[i * probs.c + c] = static_cast<float>(probs.data[c * M + off + i]);
    return pred;
}

std::vector<Prediction> predict(const SegmentationNet& net, std::span<const CTSlice> slices) {
    std::vector<Prediction> out;
    constexpr std::size_t kChunk = 8;
    for (std::size_t start = 0; start < slices.size(); start += kChunk) {
        std::vector<const CTSlice*> ptrs;
        for (std::size_t i = start; i < std::min(slices.size(), start + kChunk); ++i) ptrs.push_back(&slices[i]);
        const auto probs = softmax(net.forward_eval(make_batch<float>(ptrs)));
        for (int n = 0; n < probs.n; ++n) out.push_back(to_prediction(probs, n));
    }
    return out;
}

LabelMap argmax_labels(const Prediction& pred) {
    Grid2D<std::uint8_t> g(pred.height, pred.width);
    for (std::size_t i = 0; i < pred.num_pixels(); ++i) {
        const float* p = pred.pixel(i);
        g[i] = static_cast<std::uint8_t>(std::max_element(p, p + pred.num_classes) - p);
    }
    return LabelMap(std::move(g));
}

template class SegmentationNetT<float>;
template class SegmentationNetT<double>;
template Tensor<float> make_batch<float>(std::span<const CTSlice* const>);
template Tensor<double> make_batch<double>(std::span<const CTSlice* const>);
template Tensor<float> softmax<float>(const Tensor<float>&);
template Tensor<double> softmax<double>(const Tensor<double>&);
template Prediction to_prediction<float>(const Tensor<float>&, int);
template Prediction to_prediction<double>(const Tensor<double>&, int);

}  // namespace adaug
