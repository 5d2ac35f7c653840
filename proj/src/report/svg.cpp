#include "nerd/report/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace nerd::report {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 55;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

class Canvas {
public:
  Canvas(const std::string& title, const std::string& x_label, const std::string& y_label, Range x, Range y)
      : x_(x), y_(y) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
         << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-family=\"sans-serif\">"
         << escape(title) << "</text>\n";
    out_ << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
         << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = x_.lo + (x_.hi - x_.lo) * i / 4.0;
      const double fy = y_.lo + (y_.hi - y_.lo) * i / 4.0;
      out_ << "<text x=\"" << num(px(fx)) << "\" y=\"" << kHeight - kBottom + 16
           << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << num(fx) << "</text>\n";
      out_ << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(fy) + 4)
           << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(fy) << "</text>\n";
    }
    out_ << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
         << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << escape(x_label) << "</text>\n";
    out_ << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
         << ")\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << escape(y_label) << "</text>\n";
  }

  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom); }

  std::ostringstream& out() { return out_; }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 14 + 16.0 * static_cast<double>(i);
      out_ << "<rect x=\"" << kWidth - kRight - 130 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
           << kPalette[i % 8] << "\"/>\n"
           << "<text x=\"" << kWidth - kRight - 115 << "\" y=\"" << y
           << "\" font-size=\"11\" font-family=\"sans-serif\">" << escape(names[i]) << "</text>\n";
    }
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

private:
  Range x_, y_;
  std::ostringstream out_;
};

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      xr.add(s.x[i]);
      const double band = s.band.size() ? s.band[i] : 0.0;
      yr.add(s.y[i] - band);
      yr.add(s.y[i] + band);
    }
  }
  xr.finish();
  yr.finish();
  Canvas c(title, x_label, y_label, xr, yr);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    const char* color = kPalette[k % 8];
    if (s.band.size() == s.y.size() && s.y.size() > 0) {
      c.out() << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (Eigen::Index i = 0; i < s.x.size(); ++i) c.out() << num(c.px(s.x[i])) << ',' << num(c.py(s.y[i] + s.band[i])) << ' ';
      for (Eigen::Index i = s.x.size() - 1; i >= 0; --i)
        c.out() << num(c.px(s.x[i])) << ',' << num(c.py(s.y[i] - s.band[i])) << ' ';
      c.out() << "\"/>\n";
    }
    c.out() << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (Eigen::Index i = 0; i < s.x.size(); ++i) c.out() << num(c.px(s.x[i])) << ',' << num(c.py(s.y[i])) << ' ';
    c.out() << "\"/>\n";
  }
  c.legend(names);
  return c.finish();
}

std::string scatter_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& groups, const double* intercept, const double* slope) {
  Range xr, yr;
  for (const auto& g : groups)
    for (Eigen::Index i = 0; i < g.x.size(); ++i) {
      xr.add(g.x[i]);
      yr.add(g.y[i]);
    }
  xr.finish();
  yr.finish();
  Canvas c(title, x_label, y_label, xr, yr);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    names.push_back(groups[k].name);
    for (Eigen::Index i = 0; i < groups[k].x.size(); ++i)
      c.out() << "<circle cx=\"" << num(c.px(groups[k].x[i])) << "\" cy=\"" << num(c.py(groups[k].y[i]))
              << "\" r=\"4\" fill=\"" << kPalette[k % 8] << "\"/>\n";
  }
  if (intercept != nullptr && slope != nullptr) {
    const double x0 = xr.lo, x1 = xr.hi;
    c.out() << "<line x1=\"" << num(c.px(x0)) << "\" y1=\"" << num(c.py(*intercept + *slope * x0)) << "\" x2=\""
            << num(c.px(x1)) << "\" y2=\"" << num(c.py(*intercept + *slope * x1))
            << "\" stroke=\"#333\" stroke-dasharray=\"5,4\"/>\n";
  }
  c.legend(names);
  return c.finish();
}

std::string heatmap(const std::string& title, const Matrix& values, const std::vector<std::string>& labels) {
  const double size = 360;
  const double left = 90, top = 50;
  const auto n = values.rows();
  const double cell = n > 0 ? size / static_cast<double>(n) : size;
  const double cell_w = values.cols() > 0 ? size / static_cast<double>(values.cols()) : size;
  double lo = n ? values.minCoeff() : 0.0, hi = n ? values.maxCoeff() : 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + size + 30 << "\" height=\"" << top + size + 30
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(left + size / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-family=\"sans-serif\">"
      << escape(title) << "</text>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const double f = (values(i, j) - lo) / (hi - lo);
      const int r = static_cast<int>(std::lround(255 * f));
      const int b = 255 - r;
      out << "<rect x=\"" << num(left + cell_w * static_cast<double>(j)) << "\" y=\"" << num(top + cell * static_cast<double>(i))
          << "\" width=\"" << num(cell_w) << "\" height=\"" << num(cell) << "\" fill=\"rgb(" << r << ",64," << b << ")\"/>\n";
    }
    if (n <= 50 && static_cast<std::size_t>(i) < labels.size())
      out << "<text x=\"" << left - 4 << "\" y=\"" << num(top + cell * (static_cast<double>(i) + 0.7))
          << "\" text-anchor=\"end\" font-size=\"9\" font-family=\"sans-serif\">" << escape(labels[static_cast<std::size_t>(i)])
          << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string dendrogram(const std::string& title, const numerics::Dendrogram& tree,
                       const std::vector<std::string>& leaf_labels) {
  const auto n = static_cast<int>(leaf_labels.size());
  // Leaf order from a depth-first walk of the tree.
  std::vector<double> x_of(static_cast<std::size_t>(2 * std::max(n, 1)), 0.0);
  std::vector<double> h_of(x_of.size(), 0.0);
  std::vector<int> order;
  std::vector<std::pair<int, int>> children(x_of.size(), {-1, -1});
  for (std::size_t m = 0; m < tree.merges.size(); ++m)
    children[static_cast<std::size_t>(n) + m] = {tree.merges[m].left, tree.merges[m].right};
  const int root = n + static_cast<int>(tree.merges.size()) - 1;
  std::vector<int> stack{n > 0 ? root : -1};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (id < 0) continue;
    if (id < n) {
      order.push_back(id);
    } else {
      stack.push_back(children[static_cast<std::size_t>(id)].second);
      stack.push_back(children[static_cast<std::size_t>(id)].first);
    }
  }
  Range xr, yr;
  xr.add(0);
  xr.add(std::max(1, n - 1));
  yr.add(0);
  for (const auto& m : tree.merges) yr.add(m.height);
  xr.finish();
  yr.finish();
  Canvas c(title, "subject", "merge height", xr, yr);
  for (std::size_t i = 0; i < order.size(); ++i) x_of[static_cast<std::size_t>(order[i])] = static_cast<double>(i);
  for (std::size_t m = 0; m < tree.merges.size(); ++m) {
    const auto& mg = tree.merges[m];
    const auto l = static_cast<std::size_t>(mg.left), r = static_cast<std::size_t>(mg.right);
    const auto id = static_cast<std::size_t>(n) + m;
    x_of[id] = 0.5 * (x_of[l] + x_of[r]);
    h_of[id] = mg.height;
    c.out() << "<polyline fill=\"none\" stroke=\"#333\" points=\"" << num(c.px(x_of[l])) << ',' << num(c.py(h_of[l])) << ' '
            << num(c.px(x_of[l])) << ',' << num(c.py(mg.height)) << ' ' << num(c.px(x_of[r])) << ','
            << num(c.py(mg.height)) << ' ' << num(c.px(x_of[r])) << ',' << num(c.py(h_of[r])) << "\"/>\n";
  }
  for (int leaf : order)
    c.out() << "<text x=\"" << num(c.px(x_of[static_cast<std::size_t>(leaf)])) << "\" y=\"" << num(c.py(0) + 12)
            << "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">"
            << escape(leaf_labels[static_cast<std::size_t>(leaf)]) << "</text>\n";
  return c.finish();
}

}  // namespace nerd::report
