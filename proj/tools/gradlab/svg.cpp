#include "gradlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <utility>

namespace gradlab::cli {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    return s == "-0.00" ? "0.00" : s;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        case '\'':
            out += "&apos;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

class Svg {
public:
    Svg(double width, double height) : width_(width), height_(height) {
        body_ += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"#ffffff\"/>\n";
    }

    void text(double x, double y, const std::string& s, const char* anchor = "start", double size = 12,
              const std::string& extra = "") {
        body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + num(size) +
                 "\" text-anchor=\"" + anchor + "\"" + extra + ">" + escape(s) + "</text>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1,
              const std::string& extra = "") {
        body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
                 "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"" + extra + "/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
        body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
                 "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& fill, const std::string& stroke,
                const std::string& extra = "") {
        body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" + fill +
                 "\" stroke=\"" + stroke + "\"" + extra + "/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 2,
                  const std::string& extra = "") {
        std::string p;
        for (const auto& [x, y] : pts) {
            p += (p.empty() ? "" : " ") + num(x) + "," + num(y);
        }
        body_ += "<polyline points=\"" + p + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
                 "\"" + extra + "/>\n";
    }

    std::string str() const {
        return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
               num(width_) + "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) +
               "\">\n" + body_ + "</svg>\n";
    }

private:
    double width_;
    double height_;
    std::string body_;
};

const std::string kDashed = " stroke-dasharray=\"5,4\"";

// Plot frame: maps data ranges onto a rectangle.
struct Frame {
    double left = 70, top = 50, width = 560, height = 300;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x1 == x0 ? 0.5 : (x - x0) / (x1 - x0)) * width; }
    double py(double y, double lo, double hi) const {
        return top + height - (hi == lo ? 0.5 : (y - lo) / (hi - lo)) * height;
    }
    double py(double y) const { return py(y, y0, y1); }
    double bottom() const { return top + height; }
    double right() const { return left + width; }
};

void draw_axes(Svg& svg, const Frame& f, const std::string& title, const std::string& x_label,
               const std::string& y_label) {
    svg.text(f.left + f.width / 2, 28, title, "middle", 15);
    svg.line(f.left, f.bottom(), f.right(), f.bottom(), "#333333");
    svg.line(f.left, f.top, f.left, f.bottom(), "#333333");
    svg.text(f.left + f.width / 2, f.bottom() + 40, x_label, "middle", 12);
    const double yc = f.top + f.height / 2;
    svg.text(18, yc, y_label, "middle", 12, " transform=\"rotate(-90 18 " + num(yc) + ")\"");
}

void y_ticks(Svg& svg, const Frame& f, double lo, double hi, bool right_side, const char* format) {
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        const double y = f.py(v, lo, hi);
        if (right_side) {
            svg.line(f.right(), y, f.right() + 5, y, "#333333");
            svg.text(f.right() + 8, y + 4, fmt(format, v), "start", 10);
        } else {
            svg.line(f.left - 5, y, f.left, y, "#333333");
            svg.text(f.left - 8, y + 4, fmt(format, v), "end", 10);
            svg.line(f.left, y, f.right(), y, "#eeeeee");
        }
    }
}

void legend(Svg& svg, double x, double y, const std::vector<std::pair<std::string, std::string>>& entries) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double yy = y + 18.0 * static_cast<double>(i);
        svg.rect(x, yy - 9, 14, 10, entries[i].second);
        svg.text(x + 20, yy, entries[i].first, "start", 11);
    }
}

std::string label_of(const std::string& id, const std::map<std::string, std::string>& labels) {
    auto it = labels.find(id);
    return it == labels.end() ? id : it->second;
}

} // namespace

std::string convergence_svg(const TrainingTrace& trace) {
    Svg svg(760, 460);
    Frame f;
    f.x0 = 0;
    f.x1 = trace.step.empty() ? 1.0 : static_cast<double>(trace.step.back());
    double loss_hi = 0.0;
    for (double l : trace.loss) {
        if (std::isfinite(l)) {
            loss_hi = std::max(loss_hi, l);
        }
    }
    loss_hi = loss_hi > 0.0 ? loss_hi * 1.1 : 1.0;
    draw_axes(svg, f, "GRADIEND training convergence (seed " + std::to_string(trace.seed) + ")", "training step",
              "mean training loss");
    y_ticks(svg, f, 0.0, loss_hi, false, "%.3g");
    y_ticks(svg, f, -1.0, 1.0, true, "%.2f");
    const double yc = f.top + f.height / 2;
    const double rx = f.right() + 55;
    svg.text(rx, yc, "validation correlation", "middle", 12, " transform=\"rotate(90 " + num(rx) + " " + num(yc) + ")\"");
    for (std::size_t s : trace.step) {
        const double x = f.px(static_cast<double>(s));
        svg.line(x, f.bottom(), x, f.bottom() + 5, "#333333");
        svg.text(x, f.bottom() + 18, std::to_string(s), "middle", 10);
    }
    std::vector<std::pair<double, double>> loss_pts, corr_pts;
    for (std::size_t i = 0; i < trace.step.size(); ++i) {
        const double x = f.px(static_cast<double>(trace.step[i]));
        if (std::isfinite(trace.loss[i])) {
            loss_pts.push_back({x, f.py(trace.loss[i], 0.0, loss_hi)});
        }
        if (std::isfinite(trace.correlation[i])) {
            corr_pts.push_back({x, f.py(trace.correlation[i], -1.0, 1.0)});
        }
    }
    svg.polyline(loss_pts, kPalette[0]);
    svg.polyline(corr_pts, kPalette[1]);
    for (const auto& [x, y] : loss_pts) {
        svg.circle(x, y, 3, kPalette[0], "none");
    }
    for (const auto& [x, y] : corr_pts) {
        svg.circle(x, y, 3, kPalette[1], "none");
    }
    if (trace.best_step > 0) {
        const double x = f.px(static_cast<double>(trace.best_step));
        svg.line(x, f.top, x, f.bottom(), "#555555", 1, kDashed);
        svg.text(x + 4, f.top + 12, "best |r| = " + fmt("%.3f", trace.best_abs_correlation), "start", 10);
    }
    legend(svg, f.left + 10, f.bottom() + 62, {{"loss", kPalette[0]}, {"correlation", kPalette[1]}});
    return svg.str();
}

std::string encoder_svg(const EncoderReport& report) {
    Svg svg(760, 420 + 18.0 * static_cast<double>(report.histogram.size()));
    Frame f;
    f.x0 = -1.0;
    f.x1 = 1.0;
    double hi = 0.0;
    for (const auto& [name, h] : report.histogram) {
        for (auto c : h.counts) {
            if (h.total > 0) {
                hi = std::max(hi, static_cast<double>(c) / static_cast<double>(h.total));
            }
        }
    }
    f.y0 = 0.0;
    f.y1 = hi > 0.0 ? hi * 1.1 : 1.0;
    draw_axes(svg, f, "Encoded values (r = " + fmt("%.3f", report.correlation) + ")", "encoded value h",
              "fraction of set");
    y_ticks(svg, f, f.y0, f.y1, false, "%.2f");
    for (int i = 0; i <= 4; ++i) {
        const double v = -1.0 + 0.5 * i;
        svg.line(f.px(v), f.bottom(), f.px(v), f.bottom() + 5, "#333333");
        svg.text(f.px(v), f.bottom() + 18, fmt("%.1f", v), "middle", 10);
    }
    std::vector<std::pair<std::string, std::string>> entries;
    std::size_t color = 0;
    for (const auto& [name, h] : report.histogram) {
        const std::string c = kPalette[color++ % std::size(kPalette)];
        std::vector<std::pair<double, double>> pts;
        const double bin = 2.0 / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double frac = h.total == 0 ? 0.0 : static_cast<double>(h.counts[b]) / static_cast<double>(h.total);
            const double xl = -1.0 + bin * static_cast<double>(b);
            pts.push_back({f.px(xl), f.py(frac)});
            pts.push_back({f.px(xl + bin), f.py(frac)});
        }
        svg.polyline(pts, c, 1.5);
        std::string label = name + " (n = " + std::to_string(h.total);
        if (auto it = report.mean_by_class.find(name); it != report.mean_by_class.end()) {
            label += ", mean " + fmt("%.3f", it->second);
        } else if (name == "neutral") {
            label += ", mean " + fmt("%.3f", report.neutral_mean);
        }
        entries.push_back({label + ")", c});
    }
    legend(svg, f.left + 10, f.bottom() + 62, entries);
    return svg.str();
}

std::string decoder_svg(const DecoderReport& report) {
    Svg svg(760, 480);
    Frame f;
    const std::size_t n = report.grid.size();
    f.x0 = 0.0;
    f.x1 = n > 1 ? static_cast<double>(n - 1) : 1.0;
    f.y0 = 0.0;
    f.y1 = 1.0;
    draw_axes(svg, f, "Decoder grid for target class " + report.target_class, "learning rate (grid order)",
              "probability / LMS");
    y_ticks(svg, f, 0.0, 1.0, false, "%.2f");
    std::vector<std::pair<double, double>> tp, op, lm;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = report.grid[i];
        const double x = f.px(static_cast<double>(i));
        svg.line(x, f.bottom(), x, f.bottom() + 5, "#333333");
        svg.text(x, f.bottom() + 18, fmt("%g", e.lr), "middle", 10);
        tp.push_back({x, f.py(e.target_prob)});
        op.push_back({x, f.py(e.other_prob)});
        lm.push_back({x, f.py(e.lms)});
    }
    svg.line(f.left, f.py(report.base_target_prob), f.right(), f.py(report.base_target_prob), kPalette[0], 1, kDashed);
    const double threshold = report.lms_threshold * report.base_lms;
    svg.line(f.left, f.py(threshold), f.right(), f.py(threshold), kPalette[2], 1, kDashed);
    svg.polyline(tp, kPalette[0]);
    svg.polyline(op, kPalette[1]);
    svg.polyline(lm, kPalette[2]);
    for (const auto* series : {&tp, &op, &lm}) {
        for (const auto& [x, y] : *series) {
            svg.circle(x, y, 2.5, "#333333", "none");
        }
    }
    if (report.selected_lr) {
        for (std::size_t i = 0; i < n; ++i) {
            if (report.grid[i].lr == *report.selected_lr) {
                const double x = f.px(static_cast<double>(i));
                svg.line(x, f.top, x, f.bottom(), "#000000", 1.5, kDashed);
                svg.text(x + 4, f.top + 12, "selected lr = " + fmt("%g", *report.selected_lr), "start", 10);
                break;
            }
        }
    } else {
        svg.text(f.left + 8, f.top + 12, "no learning rate qualifies", "start", 10);
    }
    legend(svg, f.left + 10, f.bottom() + 62,
           {{"target_prob (" + report.target_class + "), dashed = base", kPalette[0]},
            {"other_prob", kPalette[1]},
            {"LMS, dashed = threshold", kPalette[2]}});
    return svg.str();
}

namespace {

double lens_area(double r1, double r2, double d) {
    if (d >= r1 + r2) {
        return 0.0;
    }
    if (d <= std::abs(r1 - r2)) {
        const double r = std::min(r1, r2);
        return std::numbers::pi * r * r;
    }
    const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
    const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
    return r1 * r1 * (a1 - std::sin(2 * a1) / 2) + r2 * r2 * (a2 - std::sin(2 * a2) / 2);
}

// Centre distance whose lens area equals `target` (bisection; area is monotone in d).
double distance_for(double r1, double r2, double target) {
    double lo = std::abs(r1 - r2);
    double hi = r1 + r2;
    for (int it = 0; it < 100; ++it) {
        const double mid = (lo + hi) / 2;
        (lens_area(r1, r2, mid) > target ? lo : hi) = mid;
    }
    return (lo + hi) / 2;
}

} // namespace

std::string venn_svg(const VennRegions& regions, const std::map<std::string, std::string>& labels) {
    const std::size_t n = regions.set_ids.size();
    std::vector<std::size_t> sizes(n, 0);
    auto pair_count = [&](std::size_t i, std::size_t j) {
        std::size_t c = 0;
        for (const auto& [mask, count] : regions.region_counts) {
            if ((mask & (1u << i)) && (mask & (1u << j))) {
                c += count;
            }
        }
        return c;
    };
    for (const auto& [mask, count] : regions.region_counts) {
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                sizes[i] += count;
            }
        }
    }
    const double max_size = static_cast<double>(std::max<std::size_t>(1, *std::max_element(sizes.begin(), sizes.end())));
    const double r_max = 120.0;
    const double per_element = std::numbers::pi * r_max * r_max / max_size;
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = std::max(4.0, std::sqrt(static_cast<double>(sizes[i]) * per_element / std::numbers::pi));
    }
    auto dist = [&](std::size_t i, std::size_t j) {
        return distance_for(r[i], r[j], static_cast<double>(pair_count(i, j)) * per_element);
    };
    std::vector<std::pair<double, double>> c(n);
    c[0] = {0.0, 0.0};
    c[1] = {dist(0, 1), 0.0};
    if (n == 3) {
        const double d01 = c[1].first;
        const double d02 = dist(0, 2);
        const double d12 = dist(1, 2);
        const double x = d01 > 0 ? (d01 * d01 + d02 * d02 - d12 * d12) / (2 * d01) : 0.0;
        c[2] = {x, std::sqrt(std::max(0.0, d02 * d02 - x * x))};
    }
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
        min_x = std::min(min_x, c[i].first - r[i]);
        max_x = std::max(max_x, c[i].first + r[i]);
        min_y = std::min(min_y, c[i].second - r[i]);
        max_y = std::max(max_y, c[i].second + r[i]);
    }
    const double width = 760;
    const double plot_h = max_y - min_y;
    const double key_h = 18.0 * static_cast<double>(n);
    const double height = 120 + key_h + plot_h + 24.0 * static_cast<double>((1u << n)) + 20;
    const double ox = (width - (max_x - min_x)) / 2 - min_x;
    const double oy = 60 + key_h - min_y;

    Svg svg(width, height);
    svg.text(width / 2, 28, "Top-k overlap (union " + std::to_string(regions.union_size) + " coordinates)", "middle",
             15);
    for (std::size_t i = 0; i < n; ++i) {
        svg.circle(c[i].first + ox, c[i].second + oy, r[i], kPalette[i], kPalette[i],
                   " fill-opacity=\"0.25\" stroke-width=\"2\"");
    }
    std::vector<std::pair<std::string, std::string>> key;
    for (std::size_t i = 0; i < n; ++i) {
        key.push_back({label_of(regions.set_ids[i], labels) + " (" + std::to_string(sizes[i]) + ")", kPalette[i]});
    }
    legend(svg, 40, 52, key);
    // Region labels at the centroid of grid samples lying in exactly that region.
    std::map<unsigned, std::pair<double, double>> sum;
    std::map<unsigned, std::size_t> hits;
    const double step = 3.0;
    for (double y = min_y; y <= max_y; y += step) {
        for (double x = min_x; x <= max_x; x += step) {
            unsigned mask = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dx = x - c[i].first;
                const double dy = y - c[i].second;
                if (dx * dx + dy * dy <= r[i] * r[i]) {
                    mask |= 1u << i;
                }
            }
            if (mask != 0) {
                sum[mask].first += x;
                sum[mask].second += y;
                ++hits[mask];
            }
        }
    }
    for (const auto& [mask, count] : regions.region_counts) {
        if (auto it = hits.find(mask); it != hits.end() && it->second > 20) {
            const double hx = sum[mask].first / static_cast<double>(it->second) + ox;
            const double hy = sum[mask].second / static_cast<double>(it->second) + oy;
            svg.text(hx, hy + 5, std::to_string(count), "middle", 14, " font-weight=\"bold\"");
        }
    }
    double ly = 60 + key_h + plot_h + 50;
    svg.text(40, ly, "Region counts (coordinates in exactly these sets):", "start", 12);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        ly += 20;
        auto it = regions.region_counts.find(mask);
        svg.text(60, ly, regions.region_key(mask) + ": " + std::to_string(it == regions.region_counts.end() ? 0 : it->second),
                 "start", 11);
    }
    return svg.str();
}

std::string region_table_svg(const VennRegions& regions, const std::map<std::string, std::string>& labels) {
    const std::size_t n = regions.set_ids.size();
    const std::size_t rows = (1u << n) - 1;
    const double cell = 60;
    const double label_w = 90;
    const double width = 40 + cell * static_cast<double>(n) + label_w + 40;
    const double height = 110 + 22.0 * static_cast<double>(rows) + 40;
    Svg svg(std::max(width, 420.0), height);
    svg.text(20, 28, "Top-k region counts (union " + std::to_string(regions.union_size) + ")", "start", 15);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = 40 + cell * static_cast<double>(i) + cell / 2;
        svg.text(x, 80, label_of(regions.set_ids[i], labels), "start", 11,
                 " transform=\"rotate(-40 " + num(x) + " 80)\"");
    }
    svg.text(40 + cell * static_cast<double>(n) + 10, 80, "count", "start", 11);
    double y = 100;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (mask % 2 == 1) {
            svg.rect(36, y - 15, cell * static_cast<double>(n) + label_w, 22, "#f4f4f4");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double x = 40 + cell * static_cast<double>(i) + cell / 2;
            if (mask & (1u << i)) {
                svg.circle(x, y - 4, 6, kPalette[i % std::size(kPalette)], "none");
            } else {
                svg.circle(x, y - 4, 6, "none", "#bbbbbb");
            }
        }
        auto it = regions.region_counts.find(mask);
        svg.text(40 + cell * static_cast<double>(n) + 10, y,
                 std::to_string(it == regions.region_counts.end() ? 0 : it->second), "start", 11);
        y += 22;
    }
    return svg.str();
}

std::string heatmap_svg(const OverlapMatrix& matrix, const std::map<std::string, std::string>& labels) {
    const std::size_t n = matrix.run_ids.size();
    const double cell = std::clamp(560.0 / static_cast<double>(std::max<std::size_t>(n, 1)), 12.0, 60.0);
    const double margin = 150;
    const double side = cell * static_cast<double>(n);
    Svg svg(margin + side + 40, margin + side + 40);
    svg.text(20, 28, "Top-" + std::to_string(matrix.k) + " overlap (x100)", "start", 15);
    const double font = std::min(11.0, cell * 0.4);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string label = label_of(matrix.run_ids[i], labels);
        const double y = margin + cell * static_cast<double>(i) + cell / 2 + 4;
        svg.text(margin - 6, y, label, "end", font);
        const double x = margin + cell * static_cast<double>(i) + cell / 2;
        svg.text(x, margin - 6, label, "start", font, " transform=\"rotate(-45 " + num(x) + " " + num(margin - 6) + ")\"");
        for (std::size_t j = 0; j < n; ++j) {
            const double v = std::clamp(matrix.values[i][j], 0.0, 1.0);
            const int shade_r = static_cast<int>(std::lround(255 - v * (255 - 8)));
            const int shade_g = static_cast<int>(std::lround(255 - v * (255 - 48)));
            const int shade_b = static_cast<int>(std::lround(255 - v * (255 - 107)));
            char fill[8];
            std::snprintf(fill, sizeof fill, "#%02x%02x%02x", shade_r, shade_g, shade_b);
            const double cx = margin + cell * static_cast<double>(j);
            const double cy = margin + cell * static_cast<double>(i);
            svg.rect(cx, cy, cell, cell, fill, "#ffffff");
            if (cell >= 18) {
                svg.text(cx + cell / 2, cy + cell / 2 + 4, fmt("%.0f", 100.0 * v), "middle", font,
                         v > 0.5 ? " fill=\"#ffffff\"" : "");
            }
        }
    }
    auto group_of = [&](std::size_t i) {
        auto it = matrix.group_labels.find(matrix.run_ids[i]);
        return it == matrix.group_labels.end() ? std::string() : it->second;
    };
    for (std::size_t i = 1; i < n; ++i) {
        if (group_of(i) != group_of(i - 1)) {
            const double at = margin + cell * static_cast<double>(i);
            svg.line(margin, at, margin + side, at, "#000000", 2);
            svg.line(at, margin, at, margin + side, "#000000", 2);
        }
    }
    return svg.str();
}

} // namespace gradlab::cli
