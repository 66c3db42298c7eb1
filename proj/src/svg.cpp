#include "dncl/svg.hpp"

#include "dncl/util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dncl::svg {

namespace {

std::string color_ramp(double v) { // v in [-1, 1]: blue -> white -> red
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0) {
        r = 255;
        g = int(255 * (1.0 - v));
        b = int(255 * (1.0 - v));
    } else {
        r = int(255 * (1.0 + v));
        g = int(255 * (1.0 + v));
        b = 255;
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

} // namespace

void write_heatmap(const std::vector<double>& matrix, int n, const std::string& title,
                   const std::string& path) {
    const int cell = 22, margin = 46;
    const int size = n * cell + 2 * margin;
    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size + 20
      << "'>\n";
    s << "<rect width='100%' height='100%' fill='white'/>\n";
    s << "<text x='" << size / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' "
      << "font-size='13'>" << title << "</text>\n";
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = matrix[size_t(i * n + j)];
            s << "<rect x='" << margin + j * cell << "' y='" << margin + i * cell << "' width='"
              << cell << "' height='" << cell << "' fill='" << color_ramp(v) << "'>"
              << "<title>(" << i << "," << j << ") " << util::fmt_g(v, 4) << "</title></rect>\n";
        }
    // block separators (noisy | clean halves)
    const int half = margin + (n / 2) * cell;
    s << "<line x1='" << half << "' y1='" << margin << "' x2='" << half << "' y2='"
      << margin + n * cell << "' stroke='black' stroke-width='1.5'/>\n";
    s << "<line x1='" << margin << "' y1='" << half << "' x2='" << margin + n * cell << "' y2='"
      << half << "' stroke='black' stroke-width='1.5'/>\n";
    s << "<rect x='" << margin << "' y='" << margin << "' width='" << n * cell << "' height='"
      << n * cell << "' fill='none' stroke='black'/>\n";
    s << "</svg>\n";
    util::write_file(path, s.str());
}

void write_curves(const std::vector<std::string>& x_labels, const std::vector<Series>& series,
                  const std::string& title, const std::string& y_label, const std::string& path) {
    const int W = 560, H = 380, ml = 64, mr = 150, mt = 40, mb = 50;
    const int pw = W - ml - mr, ph = H - mt - mb;

    double lo = 1e300, hi = -1e300;
    for (const Series& sr : series)
        for (double v : sr.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) { lo -= 0.5; hi += 0.5; }
    const double pad = 0.06 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto xpos = [&](size_t i) {
        return x_labels.size() <= 1
                   ? ml + pw / 2.0
                   : ml + double(pw) * double(i) / double(x_labels.size() - 1);
    };
    auto ypos = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    s << "<rect width='100%' height='100%' fill='white'/>\n";
    s << "<text x='" << (ml + pw / 2) << "' y='22' text-anchor='middle' "
      << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
    s << "<text x='16' y='" << (mt + ph / 2) << "' font-family='sans-serif' font-size='12' "
      << "transform='rotate(-90 16 " << (mt + ph / 2) << ")' text-anchor='middle'>" << y_label
      << "</text>\n";
    s << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
      << "' fill='none' stroke='#888'/>\n";

    for (int g = 0; g <= 4; ++g) {
        const double v = lo + (hi - lo) * g / 4.0;
        const double y = ypos(v);
        s << "<line x1='" << ml << "' y1='" << y << "' x2='" << ml + pw << "' y2='" << y
          << "' stroke='#ddd'/>\n";
        s << "<text x='" << ml - 6 << "' y='" << y + 4 << "' text-anchor='end' "
          << "font-family='sans-serif' font-size='10'>" << util::fmt_g(v, 3) << "</text>\n";
    }
    for (size_t i = 0; i < x_labels.size(); ++i)
        s << "<text x='" << xpos(i) << "' y='" << mt + ph + 18 << "' text-anchor='middle' "
          << "font-family='sans-serif' font-size='11'>" << x_labels[i] << "</text>\n";

    int legend_y = mt + 8;
    for (const Series& sr : series) {
        std::ostringstream pts;
        for (size_t i = 0; i < sr.values.size(); ++i)
            pts << (i ? " " : "") << xpos(i) << ',' << ypos(sr.values[i]);
        s << "<polyline points='" << pts.str() << "' fill='none' stroke='" << sr.color
          << "' stroke-width='2'" << (sr.dashed ? " stroke-dasharray='6,4'" : "") << "/>\n";
        for (size_t i = 0; i < sr.values.size(); ++i)
            s << "<circle cx='" << xpos(i) << "' cy='" << ypos(sr.values[i])
              << "' r='3' fill='" << sr.color << "'/>\n";
        s << "<line x1='" << ml + pw + 10 << "' y1='" << legend_y << "' x2='" << ml + pw + 34
          << "' y2='" << legend_y << "' stroke='" << sr.color << "' stroke-width='2'"
          << (sr.dashed ? " stroke-dasharray='6,4'" : "") << "/>\n";
        s << "<text x='" << ml + pw + 40 << "' y='" << legend_y + 4
          << "' font-family='sans-serif' font-size='11'>" << sr.label << "</text>\n";
        legend_y += 18;
    }
    s << "</svg>\n";
    util::write_file(path, s.str());
}

} // namespace dncl::svg
