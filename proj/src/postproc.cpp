#include "adaug/postproc.hpp"

#include <queue>

namespace adaug {

std::vector<ComponentStats> lesion_components(const LabelMap& labels, const PixelSpacing& spacing,
                                              Grid2D<int>* component_ids) {
    const int h = labels.height(), w = labels.width();
    Grid2D<int> ids(h, w, 0);
    std::vector<ComponentStats> stats;
    std::queue<std::pair<int, int>> frontier;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto cls = labels(y, x);
            if (!is_lesion(cls) || ids(y, x) != 0) continue;
            ComponentStats s;
            s.id = static_cast<int>(stats.size()) + 1;
            s.cls = static_cast<ClassId>(cls);
            ids(y, x) = s.id;
            frontier.emplace(y, x);
            while (!frontier.empty()) {
                auto [cy, cx] = frontier.front();
                frontier.pop();
                ++s.area_px;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                        if (labels(ny, nx) != cls || ids(ny, nx) != 0) continue;
                        ids(ny, nx) = s.id;
                        frontier.emplace(ny, nx);
                    }
            }
            s.area_mm2 = static_cast<double>(s.area_px) * spacing.sx * spacing.sy;
            stats.push_back(s);
        }
    if (component_ids) *component_ids = std::move(ids);
    return stats;
}

LabelMap area_filter(const LabelMap& labels, const PixelSpacing& spacing, double min_area_mm2, ClassId replacement) {
    Grid2D<int> ids;
    const auto stats = lesion_components(labels, spacing, &ids);
    std::vector<bool> drop(stats.size() + 1, false);
    bool any = false;
    for (const auto& s : stats)
        if (s.area_mm2 < min_area_mm2) drop[static_cast<std::size_t>(s.id)] = any = true;
    if (!any) return labels;
    LabelMap out = labels;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (drop[static_cast<std::size_t>(ids[i])]) out.set(i, replacement);
    return out;
}

LabelMap liver_refine(const LabelMap& labels, const Mask& liver_mask) {
    if (!labels.grid().same_shape(liver_mask)) throw ShapeError("label map and liver mask differ in size");
    LabelMap out = labels;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!liver_mask[i]) out.set(i, ClassId::background);
    return out;
}

}  // namespace adaug
