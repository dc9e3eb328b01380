#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim::svg {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

namespace detail {

inline void text(std::string& b, double x, double y, const std::string& s,
                 const char* anchor = "middle", int size = 12,
                 const char* fill = "#333") {
    b += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor +
         "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) +
         "\" fill=\"" + fill + "\">" + escape(s) + "</text>\n";
}

inline void line(std::string& b, double x1, double y1, double x2, double y2,
                 const char* stroke, double width = 1.0,
                 const char* dash = nullptr) {
    b += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
         "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
         num(width) + "\"";
    if (dash) b += std::string(" stroke-dasharray=\"") + dash + "\"";
    b += "/>\n";
}

inline void rect(std::string& b, double x, double y, double w, double h,
                 const char* fill) {
    b += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
}

inline std::string wrap(double width, double height, const std::string& body) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + num(width) +
           " " + num(height) + "\" width=\"" + num(width) + "\" height=\"" +
           num(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body + "</svg>\n";
}

inline const char* kHonest = "#4878a8";
inline const char* kMalicious = "#c44e52";

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#4878a8", "#c44e52", "#6aa66a",
                                   "#8064a2", "#c8883c", "#55a0b0"};
    return colors[i % 6];
}

}  // namespace detail

// Per-client bar chart of one round's aggregation weights; bars colored by
// the client's honest/malicious flag. A dashed line marks the uniform 1/N.
inline std::string bar_chart(const std::vector<double>& values,
                             const std::vector<char>& malicious,
                             const std::string& title) {
    using namespace detail;
    if (values.empty() || values.size() != malicious.size())
        throw InputError("bar_chart: need matching non-empty values and flags");
    const std::size_t n = values.size();
    const double width = 720, height = 420;
    const double left = 64, right = 24, top = 44, bottom = 52;
    const double pw = width - left - right, ph = height - top - bottom;

    double vmax = 1.0 / double(n);
    for (double v : values) vmax = std::max(vmax, v);
    vmax *= 1.15;

    std::string b;
    text(b, width / 2, 24, title, "middle", 14);

    for (int i = 0; i <= 4; ++i) {
        const double v = vmax * i / 4.0;
        const double y = top + ph - ph * i / 4.0;
        line(b, left, y, left + pw, y, i == 0 ? "#888" : "#ddd");
        text(b, left - 6, y + 4, num(v), "end", 10, "#555");
    }
    const double uy = top + ph - ph * (1.0 / double(n)) / vmax;
    line(b, left, uy, left + pw, uy, "#888", 1.0, "4,3");
    text(b, left + pw + 2, uy + 4, "1/N", "start", 10, "#555");

    const double slot = pw / double(n);
    const double bw = slot * 0.8;
    const std::size_t label_step = n > 40 ? 5 : (n > 20 ? 2 : 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = ph * std::clamp(values[i], 0.0, vmax) / vmax;
        const double x = left + slot * double(i) + slot * 0.1;
        rect(b, x, top + ph - h, bw, h, malicious[i] ? kMalicious : kHonest);
        if (i % label_step == 0)
            text(b, x + bw / 2, top + ph + 14, std::to_string(i), "middle", 9, "#555");
    }
    text(b, left + pw / 2, height - 14, "client", "middle", 11, "#555");

    rect(b, left + pw - 150, top + 4, 12, 12, kHonest);
    text(b, left + pw - 134, top + 14, "honest", "start", 11);
    rect(b, left + pw - 150, top + 22, 12, 12, kMalicious);
    text(b, left + pw - 134, top + 32, "malicious", "start", 11);
    return wrap(width, height, b);
}

struct LineSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y), y in [0,1]
};

// Accuracy-vs-attack-fraction chart, one line per series; both axes span
// [0,1].
inline std::string line_chart(const std::vector<LineSeries>& series,
                              const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
    using namespace detail;
    if (series.empty()) throw InputError("line_chart: no series");
    const double width = 720, height = 440;
    const double left = 64, right = 24, top = 44, bottom = 56;
    const double pw = width - left - right, ph = height - top - bottom;

    auto px = [&](double x) { return left + pw * std::clamp(x, 0.0, 1.0); };
    auto py = [&](double y) { return top + ph - ph * std::clamp(y, 0.0, 1.0); };

    std::string b;
    text(b, width / 2, 24, title, "middle", 14);
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        line(b, px(v), top, px(v), top + ph, i == 0 ? "#888" : "#eee");
        line(b, left, py(v), left + pw, py(v), i == 0 ? "#888" : "#eee");
        text(b, px(v), top + ph + 16, num(v), "middle", 10, "#555");
        text(b, left - 6, py(v) + 4, num(v), "end", 10, "#555");
    }
    text(b, left + pw / 2, height - 14, x_label, "middle", 11, "#555");
    b += "<text x=\"16\" y=\"" + num(top + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#555\" transform=\"rotate(-90 16 " +
         num(top + ph / 2) + ")\">" + escape(y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette(s);
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!pts.empty()) pts += " ";
            pts += num(px(x)) + "," + num(py(y));
        }
        if (!pts.empty())
            b += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                 "\" stroke-width=\"2\"/>\n";
        for (const auto& [x, y] : series[s].points)
            b += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) +
                 "\" r=\"3\" fill=\"" + color + "\"/>\n";
        const double ly = top + 10 + 16.0 * double(s);
        line(b, left + pw - 150, ly, left + pw - 126, ly, color, 2.0);
        text(b, left + pw - 120, ly + 4, series[s].name, "start", 11);
    }
    return wrap(width, height, b);
}

}  // namespace fedsim::svg
