#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "iogvqa/errors.hpp"
#include "iogvqa/evaluation.hpp"

namespace iog {
namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::filesystem::path& path) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open " + path.string());
  Table t;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size())
      throw ValidationError(path.string() + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                            std::to_string(row.size()) + " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ValidationError(path.string() + ": empty CSV");
  if (t.rows.empty()) throw ValidationError(path.string() + ": CSV has no data rows");
  return t;
}

double number(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(path.string() + ": not a number: '" + s + "'");
  }
}

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

// One series of (label, x, y) points per group; x positions are slots when
// the labels are categorical.
struct Point {
  std::string label;
  double x;
  double y;
};

std::string render(const std::string& title, const std::string& x_title, const std::vector<Point>& pts,
                   bool bars) {
  double ylo = 1.0, yhi = 0.0, xlo = 0.0, xhi = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ylo = std::min(ylo, pts[i].y);
    yhi = std::max(yhi, pts[i].y);
    xlo = i == 0 ? pts[i].x : std::min(xlo, pts[i].x);
    xhi = i == 0 ? pts[i].x : std::max(xhi, pts[i].x);
  }
  ylo = std::max(0.0, std::floor(ylo * 20.0 - 1.0) / 20.0);
  yhi = std::min(1.0, std::ceil(yhi * 20.0 + 1.0) / 20.0);
  if (yhi <= ylo) yhi = ylo + 0.05;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) {
    if (bars || xhi == xlo) return kLeft + pw * (bars ? (x + 0.5) / static_cast<double>(pts.size()) : 0.5);
    return kLeft + pw * (0.05 + 0.9 * (x - xlo) / (xhi - xlo));
  };
  auto sy = [&](double y) { return kTop + ph * (1.0 - (y - ylo) / (yhi - ylo)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << f3(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = ylo + (yhi - ylo) * k / 4.0;
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << f3(sy(y) + 4) << "\" text-anchor=\"end\">" << f3(100.0 * y)
      << "%</text>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << f3(sy(y)) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << f3(sy(y))
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << f3(kLeft + pw / 2) << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
    << escape(x_title) << "</text>\n";

  if (bars) {
    const double bw = 0.6 * pw / static_cast<double>(pts.size());
    for (const Point& p : pts) {
      o << "<rect x=\"" << f3(sx(p.x) - bw / 2) << "\" y=\"" << f3(sy(p.y)) << "\" width=\"" << f3(bw)
        << "\" height=\"" << f3(kTop + ph - sy(p.y)) << "\" fill=\"#4a7ab5\"/>\n";
      o << "<text x=\"" << f3(sx(p.x)) << "\" y=\"" << f3(kTop + ph + 16) << "\" text-anchor=\"middle\">"
        << escape(p.label) << "</text>\n";
    }
  } else {
    if (pts.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"#4a7ab5\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i) o << (i ? " " : "") << f3(sx(pts[i].x)) << ',' << f3(sy(pts[i].y));
      o << "\"/>\n";
    }
    for (const Point& p : pts) {
      o << "<circle cx=\"" << f3(sx(p.x)) << "\" cy=\"" << f3(sy(p.y)) << "\" r=\"4\" fill=\"#4a7ab5\"/>\n";
      o << "<text x=\"" << f3(sx(p.x)) << "\" y=\"" << f3(kTop + ph + 16) << "\" text-anchor=\"middle\">"
        << escape(p.label) << "</text>\n";
    }
  }
  for (const Point& p : pts)
    o << "<text x=\"" << f3(sx(p.x)) << "\" y=\"" << f3(sy(p.y) - 8) << "\" text-anchor=\"middle\" font-size=\"10\">"
      << f3(100.0 * p.y) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

void plot(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path) {
  const Table t = read_csv(csv_path);
  const bool ablation = std::find(t.header.begin(), t.header.end(), "gan") != t.header.end();
  std::vector<Point> pts;
  std::string title, x_title;
  const std::size_t overall = t.column("overall", csv_path);

  if (ablation) {
    const std::size_t g = t.column("gan", csv_path), d = t.column("distill", csv_path);
    std::map<std::pair<int, int>, std::vector<double>> acc;
    for (const auto& r : t.rows) {
      if (r[overall].empty()) continue;  // failed row
      acc[{static_cast<int>(number(r[g], csv_path)), static_cast<int>(number(r[d], csv_path))}].push_back(
          number(r[overall], csv_path));
    }
    if (acc.empty()) throw ValidationError(csv_path.string() + ": no completed rows");
    const std::map<std::pair<int, int>, std::string> names{
        {{0, 0}, "WCE"}, {{1, 0}, "WCE+GAN"}, {{0, 1}, "WCE+Distill"}, {{1, 1}, "WCE+GAN+Distill"}};
    for (auto key : {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}}) {
      auto it = acc.find(key);
      if (it == acc.end()) continue;
      pts.push_back({names.at(key), static_cast<double>(pts.size()), median_of(it->second)});
    }
    title = "Ablation: median overall accuracy";
    x_title = "training losses";
  } else {
    const std::size_t p = t.column("param", csv_path), v = t.column("value", csv_path);
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> acc;
    for (const auto& r : t.rows) {
      if (!acc.count(r[v])) order.push_back(r[v]);
      acc[r[v]].push_back(number(r[overall], csv_path));
    }
    bool numeric = true;
    for (const auto& s : order) {
      try {
        number(s, csv_path);
      } catch (const ValidationError&) {
        numeric = false;
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i)
      pts.push_back({order[i], numeric ? number(order[i], csv_path) : static_cast<double>(i), median_of(acc[order[i]])});
    std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
    title = "Sweep over " + t.rows.front()[p] + ": median overall accuracy";
    x_title = t.rows.front()[p];
  }

  const std::string svg = render(title, x_title, pts, ablation);
  if (svg_path.has_parent_path()) std::filesystem::create_directories(svg_path.parent_path());
  std::ofstream f(svg_path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + svg_path.string());
  f << svg;
}

}  // namespace iog
