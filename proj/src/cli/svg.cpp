#include "voltguard/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace voltguard::cli {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(4) << v;
    return o.str();
}

}  // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;

    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = spec.width - left - right;
    const double ph = spec.height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << std::fixed << std::setprecision(2);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << spec.width / 2.0 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0;
        const double fy = y0 + (y1 - y0) * i / 4.0;
        o << "<text x=\"" << px(fx) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
        o << "<text x=\"" << left - 5 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << num(fy) << "</text>\n";
        o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(fy) << "\" y2=\"" << py(fy)
          << "\" stroke=\"#ddd\"/>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << spec.height - 10 << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << "</text>\n";
    o << "<text x=\"15\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << top + ph / 2
      << ")\">" << escape(spec.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (s.markers_only) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << color
                  << "\"/>\n";
            }
        } else if (n > 0) {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            }
            o << "\"/>\n";
        }
        const double ly = top + 14 + 14.0 * static_cast<double>(k);
        o << "<rect x=\"" << left + pw - 120 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color
          << "\"/>\n";
        o << "<text x=\"" << left + pw - 105 << "\" y=\"" << ly + 1 << "\">" << escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace voltguard::cli
