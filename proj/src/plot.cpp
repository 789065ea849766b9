#include "adaug/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

#include "adaug/net.hpp"

namespace adaug {

std::array<std::uint8_t, 3> lesion_color(ClassId c) {
    switch (c) {
        case ClassId::metastasis: return {230, 30, 30};
        case ClassId::cyst: return {30, 200, 30};
        case ClassId::hemangioma: return {240, 220, 20};
        default: return {0, 0, 0};
    }
}

RgbImage overlay(const CTSlice& slice, const LabelMap& labels, int zoom) {
    if (!labels.grid().same_shape(slice.pixels())) throw ShapeError("overlay labels do not match the slice");
    if (zoom < 1) throw RangeError("zoom must be >= 1");
    RgbImage img{slice.height() * zoom, slice.width() * zoom, {}};
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const int sy = y / zoom, sx = x / zoom;
            const double g = 255.0 * normalize_hu(slice.pixels()(sy, sx));
            double rgb[3] = {g, g, g};
            const std::uint8_t cls = labels(sy, sx);
            if (is_lesion(cls)) {
                const auto c = lesion_color(static_cast<ClassId>(cls));
                for (int k = 0; k < 3; ++k) rgb[k] = 0.35 * rgb[k] + 0.65 * c[k];
            }
            auto* px = &img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3];
            for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::clamp(rgb[k] + 0.5, 0.0, 255.0));
        }
    return img;
}

RgbImage hconcat(std::span<const RgbImage> panels, int gap) {
    if (panels.empty()) return {};
    RgbImage out;
    for (const auto& p : panels) {
        out.height = std::max(out.height, p.height);
        out.width += p.width;
    }
    out.width += gap * static_cast<int>(panels.size() - 1);
    out.rgb.assign(static_cast<std::size_t>(out.height) * out.width * 3, 255);
    int x0 = 0;
    for (const auto& p : panels) {
        for (int y = 0; y < p.height; ++y)
            std::copy_n(&p.rgb[static_cast<std::size_t>(y) * p.width * 3], static_cast<std::size_t>(p.width) * 3,
                        &out.rgb[(static_cast<std::size_t>(y) * out.width + x0) * 3]);
        x0 += p.width + gap;
    }
    return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng failed writing '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(y) * image.width * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_metric_bars_svg(const std::filesystem::path& path, const ExperimentSummary& summary) {
    static constexpr const char* kColors[] = {"#7f7f7f", "#1f77b4", "#d62728", "#ff7f0e", "#2ca02c"};
    const char* metrics[] = {"Dice1", "Dice2", "Success", "ACC"};
    const int n_modes = static_cast<int>(summary.rows.size());
    const double bar = 22, group_gap = 30, left = 50, top = 30, plot_h = 260;
    const double group_w = bar * n_modes + group_gap;
    const double width = left + 4 * group_w + 20, height = top + plot_h + 70 + 18.0 * n_modes;

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n",
                  width, height);
    os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int t = 0; t <= 10; t += 2) {
        const double y = top + plot_h * (1 - t / 10.0);
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                      left, y, width - 10, y, left - 6, y + 4, t / 10.0);
        os << buf;
    }
    for (int m = 0; m < 4; ++m) {
        const double gx = left + group_gap / 2 + m * group_w;
        for (int r = 0; r < n_modes; ++r) {
            const auto& row = summary.rows[r];
            const MetricStat& s = m == 0 ? row.dice1 : m == 1 ? row.dice2 : m == 2 ? row.success : row.acc;
            const double x = gx + r * bar, h = plot_h * std::clamp(s.mean, 0.0, 1.0);
            std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                          x + 1, top + plot_h - h, bar - 2, h, kColors[static_cast<int>(row.mode) % 5]);
            os << buf;
            if (s.n > 1) {
                const double y1 = top + plot_h * (1 - std::clamp(s.mean + s.std, 0.0, 1.0));
                const double y2 = top + plot_h * (1 - std::clamp(s.mean - s.std, 0.0, 1.0));
                std::snprintf(buf, sizeof buf,
                              "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                              x + bar / 2, y1, x + bar / 2, y2);
                os << buf;
            }
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
                      gx + bar * n_modes / 2, top + plot_h + 18, metrics[m]);
        os << buf;
    }
    for (int r = 0; r < n_modes; ++r) {
        const double y = top + plot_h + 40 + 18.0 * r;
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\">%s (n=%d)</text>\n",
                      left, y - 10, kColors[static_cast<int>(summary.rows[r].mode) % 5], left + 18, y,
                      mode_name(summary.rows[r].mode), summary.rows[r].n_seeds);
        os << buf;
    }
    os << "</svg>\n";
    if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace adaug
