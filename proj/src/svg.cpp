#include "rc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace rc::svg {
namespace {

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

std::string fmt(double v, int prec = 1) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                          "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};

}  // namespace

std::string render(const Chart& chart) {
  const double margin_left = 70, margin_right = 20, margin_top = 50, margin_bottom = 90;
  const double bar_w = 26, group_gap = 30, plot_h = 300;

  std::size_t n_bars = 0;
  double vmax = chart.reference.value_or(0);
  std::vector<std::string> bar_labels;
  for (const auto& g : chart.groups) {
    n_bars += g.bars.size();
    for (const auto& b : g.bars) {
      vmax = std::max(vmax, b.value + b.error);
      if (std::find(bar_labels.begin(), bar_labels.end(), b.label) == bar_labels.end()) bar_labels.push_back(b.label);
    }
  }
  if (!(vmax > 0)) vmax = 1;
  const double step = std::pow(10.0, std::floor(std::log10(vmax)));
  const double ymax = std::ceil(vmax * 1.1 / step) * step;
  const double plot_w = std::max(200.0, static_cast<double>(n_bars) * bar_w +
                                            static_cast<double>(chart.groups.size() + 1) * group_gap);
  const double width = margin_left + plot_w + margin_right;
  const double legend_h = bar_labels.size() > 1 ? 20.0 * static_cast<double>((bar_labels.size() + 3) / 4) : 0.0;
  const double height = margin_top + plot_h + margin_bottom + legend_h;
  auto y_of = [&](double v) { return margin_top + plot_h * (1 - v / ymax); };

  std::map<std::string, const char*> colour;
  for (std::size_t i = 0; i < bar_labels.size(); ++i) colour[bar_labels[i]] = kPalette[i % 10];

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\"" << fmt(height, 0)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << fmt(width / 2, 0) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(chart.title) << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double v = ymax * i / 5, y = y_of(v);
    s << "<line x1=\"" << margin_left << "\" x2=\"" << fmt(margin_left + plot_w, 0) << "\" y1=\"" << fmt(y)
      << "\" y2=\"" << fmt(y) << "\" stroke=\"#e0e0e0\"/>\n"
      << "<text x=\"" << margin_left - 6 << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << fmt(v)
      << "</text>\n";
  }
  s << "<text transform=\"translate(18," << fmt(margin_top + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(chart.y_label) << "</text>\n";

  double x = margin_left + group_gap;
  for (const auto& g : chart.groups) {
    const double gx0 = x;
    for (const auto& b : g.bars) {
      const double y = y_of(std::max(0.0, b.value));
      s << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << bar_w - 4 << "\" height=\""
        << fmt(margin_top + plot_h - y) << "\" fill=\"" << colour[b.label] << "\"/>\n";
      if (b.error > 0) {
        const double cx = x + (bar_w - 4) / 2;
        s << "<line x1=\"" << fmt(cx) << "\" x2=\"" << fmt(cx) << "\" y1=\"" << fmt(y_of(b.value - b.error))
          << "\" y2=\"" << fmt(y_of(b.value + b.error)) << "\" stroke=\"black\"/>\n";
      }
      s << "<text x=\"" << fmt(x + (bar_w - 4) / 2) << "\" y=\"" << fmt(y_of(b.value + b.error) - 4)
        << "\" text-anchor=\"middle\" font-size=\"9\">" << fmt(b.value) << "</text>\n";
      x += bar_w;
    }
    s << "<text x=\"" << fmt((gx0 + x) / 2) << "\" y=\"" << fmt(margin_top + plot_h + 16)
      << "\" text-anchor=\"middle\">" << escape(g.label) << "</text>\n";
    x += group_gap;
  }
  s << "<line x1=\"" << margin_left << "\" x2=\"" << fmt(margin_left + plot_w, 0) << "\" y1=\""
    << fmt(margin_top + plot_h) << "\" y2=\"" << fmt(margin_top + plot_h) << "\" stroke=\"black\"/>\n";

  if (chart.reference) {
    const double y = y_of(*chart.reference);
    s << "<line x1=\"" << margin_left << "\" x2=\"" << fmt(margin_left + plot_w, 0) << "\" y1=\"" << fmt(y)
      << "\" y2=\"" << fmt(y) << "\" stroke=\"#c00\" stroke-dasharray=\"6,4\"/>\n"
      << "<text x=\"" << fmt(margin_left + plot_w - 4, 0) << "\" y=\"" << fmt(y - 4)
      << "\" text-anchor=\"end\" fill=\"#c00\">" << escape(chart.reference_label) << " " << fmt(*chart.reference)
      << "</text>\n";
  }

  if (bar_labels.size() > 1) {
    for (std::size_t i = 0; i < bar_labels.size(); ++i) {
      const double lx = margin_left + static_cast<double>(i % 4) * 160;
      const double ly = margin_top + plot_h + 40 + static_cast<double>(i / 4) * 20;
      s << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << colour[bar_labels[i]] << "\"/>\n"
        << "<text x=\"" << fmt(lx + 14) << "\" y=\"" << fmt(ly) << "\">" << escape(bar_labels[i]) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rc::svg
