#include "svg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace metabias::tool {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 540.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 24.0;
constexpr double kTop = 24.0;
constexpr double kBottom = 58.0;

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string xml_id(const std::string& study_id) {
    std::string out = "pt-";
    for (char c : study_id) {
        unsigned char u = static_cast<unsigned char>(c);
        out += (std::isalnum(u) || c == '_' || c == '-' || c == '.') ? c : '_';
    }
    return out;
}

struct Range {
    double lo, hi;
};

Range padded(std::vector<double> vals) {
    if (vals.empty()) throw DatasetError("funnel plot needs at least one plotted study");
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    double lo = *mn, hi = *mx;
    if (!(std::isfinite(lo) && std::isfinite(hi)))
        throw DatasetError("non-finite value in funnel plot data");
    double pad = (hi - lo) * 0.06;
    if (pad <= 0.0) pad = std::max(1.0, std::fabs(lo)) * 0.5;
    return {lo - pad, hi + pad};
}

std::vector<double> ticks(const Range& r, int target = 6) {
    double span = r.hi - r.lo;
    double raw = span / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    }
    std::vector<double> out;
    double first = std::ceil(r.lo / step) * step;
    for (double t = first; t <= r.hi + step * 1e-9; t += step) {
        if (std::fabs(t) < step * 1e-9) t = 0.0;
        out.push_back(t);
    }
    return out;
}

class Mapper {
public:
    Mapper(Range x, Range y) : x_(x), y_(y) {}
    double px(double v) const { return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
    // y grows upward on the plot, downward in SVG coordinates
    double py(double v) const { return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom); }

private:
    Range x_, y_;
};

void append_axes(std::string& svg, const Mapper& m, const Range& xr, const Range& yr,
                 const std::string& x_label, const std::string& y_label) {
    const double x0 = kLeft, x1 = kWidth - kRight;
    const double y0 = kHeight - kBottom, y1 = kTop;
    std::string d = "M" + num(x0) + " " + num(y0) + " H" + num(x1);
    for (double t : ticks(xr)) {
        double p = m.px(t);
        d += " M" + num(p) + " " + num(y0) + " v6";
    }
    d += " M" + num(x0) + " " + num(y0) + " V" + num(y1);
    for (double t : ticks(yr)) {
        double p = m.py(t);
        d += " M" + num(x0) + " " + num(p) + " h-6";
    }
    svg += "  <path class=\"axes\" d=\"" + d + "\" stroke=\"#333\" fill=\"none\"/>\n";
    for (double t : ticks(xr)) {
        svg += "  <text x=\"" + num(m.px(t)) + "\" y=\"" + num(y0 + 20.0) +
               "\" text-anchor=\"middle\" font-size=\"12\">" + num(t) + "</text>\n";
    }
    for (double t : ticks(yr)) {
        svg += "  <text x=\"" + num(x0 - 10.0) + "\" y=\"" + num(m.py(t) + 4.0) +
               "\" text-anchor=\"end\" font-size=\"12\">" + num(t) + "</text>\n";
    }
    svg += "  <text x=\"" + num((x0 + x1) / 2.0) + "\" y=\"" + num(kHeight - 16.0) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + x_label + "</text>\n";
    svg += "  <text x=\"16\" y=\"" + num((y0 + y1) / 2.0) +
           "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
           num((y0 + y1) / 2.0) + ")\">" + y_label + "</text>\n";
}

}  // namespace

std::string funnel_svg(const MetaDataset& ds, FunnelMode mode, double reference_theta) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    if (yi.empty()) throw DatasetError("funnel plot needs at least one published study");

    std::vector<double> xs = yi;
    xs.push_back(reference_theta);
    std::vector<double> ys;
    if (mode == FunnelMode::standard) {
        for (double s : sei) {
            if (!(s > 0.0)) throw DatasetError("published study needs a positive standard error");
            ys.push_back(1.0 / s);
        }
    } else {
        for (const auto& st : ds.studies()) {
            if (st.n <= 0) throw DatasetError("study " + st.id + " needs a positive sample size");
            ys.push_back(std::sqrt(static_cast<double>(st.n)));
        }
    }
    const Range xr = padded(xs);
    const Range yr = padded(ys);
    const Mapper m(xr, yr);

    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
           num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    svg += "  <title>funnel plot</title>\n";

    append_axes(svg, m, xr, yr, "log odds ratio",
                mode == FunnelMode::standard ? "precision (1/se)" : "sqrt(sample size)");

    svg += "  <path class=\"reference\" d=\"M" + num(m.px(reference_theta)) + " " + num(kTop) +
           " V" + num(kHeight - kBottom) +
           "\" stroke=\"#888\" stroke-dasharray=\"5 4\" fill=\"none\"/>\n";

    std::size_t pub_index = 0;
    for (const auto& st : ds.studies()) {
        if (st.published) {
            double y = mode == FunnelMode::standard ? 1.0 / sei[pub_index]
                                                    : std::sqrt(static_cast<double>(st.n));
            svg += "  <circle id=\"" + xml_id(st.id) + "\" class=\"published\" cx=\"" +
                   num(m.px(yi[pub_index])) + "\" cy=\"" + num(m.py(y)) +
                   "\" r=\"3.5\" fill=\"#1f6eb4\" fill-opacity=\"0.8\"/>\n";
            ++pub_index;
        } else if (mode == FunnelMode::modified) {
            double y = m.py(std::sqrt(static_cast<double>(st.n)));
            svg += "  <line id=\"" + xml_id(st.id) + "\" class=\"unpublished\" x1=\"" +
                   num(kLeft) + "\" x2=\"" + num(kWidth - kRight) + "\" y1=\"" + num(y) +
                   "\" y2=\"" + num(y) + "\" stroke=\"#c44\" stroke-dasharray=\"2 3\"/>\n";
        }
    }

    svg += "</svg>\n";
    return svg;
}

}  // namespace metabias::tool
