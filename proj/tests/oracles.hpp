#pragma once

// Brute-force reference implementations used only by tests.

#include <array>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "adaug/core.hpp"

namespace oracle {

using adaug::ImageClass;
using adaug::LabelMap;
using adaug::Mask;

/// A pixel survives erosion iff every pixel in its (2r+1)^2 square is inside the mask and the frame.
inline Mask erode(const Mask& m, int r) {
    Mask out(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool keep = true;
            for (int dy = -r; dy <= r && keep; ++dy)
                for (int dx = -r; dx <= r && keep; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    keep = yy >= 0 && yy < m.height() && xx >= 0 && xx < m.width() && m(yy, xx);
                }
            out(y, x) = keep;
        }
    return out;
}

inline Mask band_by_erosion(const Mask& m, int r) {
    const Mask e = erode(m, r);
    Mask out(m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] && !e[i];
    return out;
}

inline ImageClass majority_class(const LabelMap& l) {
    std::array<int, 6> counts{};
    for (std::size_t i = 0; i < l.size(); ++i) counts[l[i]]++;
    int best = -1;
    for (int c = 3; c <= 5; ++c)
        if (counts[c] > 0 && (best < 0 || counts[c] > counts[best])) best = c;
    if (best < 0) return ImageClass::healthy;
    return static_cast<ImageClass>(best - 3);
}

using PixelSet = std::set<std::pair<int, int>>;

inline PixelSet lesion_set(const LabelMap& l) {
    PixelSet s;
    for (int y = 0; y < l.height(); ++y)
        for (int x = 0; x < l.width(); ++x)
            if (l(y, x) >= 3 && l(y, x) <= 5) s.insert({y, x});
    return s;
}

inline double set_dice(const PixelSet& a, const PixelSet& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& p : a) inter += b.count(p);
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

struct Scores {
    bool has_dice1 = false;
    double dice1 = 0, dice2 = 0, success = 0, acc = 0;
};

/// Lesion-image denominators for success and Dice, all images for ACC.
inline Scores score(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts) {
    Scores s;
    int lesion_images = 0, overlaps = 0, correct = 0;
    double sum = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const PixelSet g = lesion_set(gts[i]), p = lesion_set(preds[i]);
        correct += majority_class(gts[i]) == majority_class(preds[i]);
        if (g.empty()) continue;
        ++lesion_images;
        bool overlap = false;
        for (const auto& q : g) overlap = overlap || p.count(q);
        if (overlap) {
            ++overlaps;
            sum += set_dice(g, p);
        }
    }
    if (overlaps > 0) {
        s.has_dice1 = true;
        s.dice1 = sum / overlaps;
    }
    if (lesion_images > 0) {
        s.success = static_cast<double>(overlaps) / lesion_images;
        s.dice2 = sum / lesion_images;
    }
    s.acc = gts.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gts.size());
    return s;
}

/// Mean cross-entropy of softmax(logits) against targets, one pixel at a time.
/// logits and targets are indexed [pixel][class].
inline double brute_force_ce(const std::vector<std::vector<double>>& logits,
                             const std::vector<std::vector<double>>& targets, const std::vector<double>& w) {
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double mx = logits[i][0];
        for (double v : logits[i]) mx = std::max(mx, v);
        double z = 0;
        for (double v : logits[i]) z += std::exp(v - mx);
        for (std::size_t c = 0; c < logits[i].size(); ++c) {
            const double p = std::max(std::exp(logits[i][c] - mx) / z, 1e-7);
            total -= w[c] * targets[i][c] * std::log(p);
        }
    }
    return total / static_cast<double>(logits.size());
}

}  // namespace oracle
