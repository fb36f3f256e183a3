#include <cstdio>
#include <sstream>

#include "ctxsql/infer_eval/inference.hpp"

namespace ctxsql::infer_eval {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 60;
constexpr double kRight = 150;
constexpr double kTop = 30;
constexpr double kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

struct Chart {
  double x_min, x_max;
  std::ostringstream out;

  double px(double x) const { return kLeft + (x - x_min) / std::max(x_max - x_min, 1e-9) * (kWidth - kLeft - kRight); }
  static double py(double y) { return kHeight - kBottom - y * (kHeight - kTop - kBottom); }

  void begin(const std::string& title, const std::string& x_label, const std::vector<double>& x_ticks) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << py(0)
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft << "\" y2=\"" << py(1)
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      double y = k / 4.0;
      out << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
          << num(y) << "</text>\n";
    }
    for (double x : x_ticks) {
      out << "<text x=\"" << num(px(x)) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
          << static_cast<int>(x) << "</text>\n";
    }
    out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  }

  void series(const std::vector<std::pair<double, double>>& pts, const std::string& name, std::size_t index) {
    const char* color = kColors[index % (sizeof kColors / sizeof kColors[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out << num(px(x)) << ',' << num(py(y)) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : pts) {
      out << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    double ly = kTop + 20 + 18 * static_cast<double>(index);
    out << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\"" << color
        << "\"/>\n<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << ly + 1 << "\" font-size=\"12\">" << name
        << "</text>\n";
  }

  std::string end() {
    out << "</svg>\n";
    return out.str();
  }
};

}  // namespace

std::string per_turn_curve_svg(const std::vector<std::pair<std::string, const MetricsReport*>>& series) {
  Chart c{1, kCurveTurns, {}};
  std::vector<double> ticks;
  for (int t = 1; t <= kCurveTurns; t += (t == 1 ? 4 : 5)) ticks.push_back(t);
  c.begin("Strict denotation accuracy by turn", "turn index (last bucket: all later turns)", ticks);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& b : series[k].second->per_turn) {
      if (b.count) pts.emplace_back(b.turn_index, b.strict_accuracy());
    }
    c.series(pts, series[k].first, k);
  }
  return c.end();
}

std::string history_sweep_svg(const std::vector<std::pair<int, double>>& points, const std::string& label) {
  double lo = points.empty() ? 0 : points.front().first;
  double hi = points.empty() ? 1 : points.back().first;
  Chart c{lo, std::max(hi, lo + 1), {}};
  std::vector<double> ticks;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [h, acc] : points) {
    ticks.push_back(h);
    pts.emplace_back(h, acc);
  }
  c.begin("Accuracy by history window h", "h", ticks);
  c.series(pts, label, 0);
  return c.end();
}

}  // namespace ctxsql::infer_eval
