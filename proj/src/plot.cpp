#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hindsight/harness.hpp"

namespace hindsight {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": '" + text + "' is not a number");
  }
  return v;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace

std::string plot_svg(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Series> series;
  std::string x_label = "epoch";

  if (!std::getline(in, line)) throw std::runtime_error("csv line 1: missing header");
  {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    const auto find = [&](const std::string& name) {
      return static_cast<long>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    long x_col = find("epoch");
    if (x_col == static_cast<long>(header.size())) {
      x_col = find("iteration");
      x_label = "iteration";
    }
    const long y_col = find("success_rate");
    const long s_col = find("series");
    const auto width = static_cast<long>(header.size());
    if (x_col == width || y_col == width) {
      throw std::runtime_error("csv line 1: header needs epoch (or iteration) and success_rate columns");
    }
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto fields = split(line);
      if (static_cast<long>(fields.size()) != width) {
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                 " fields, found " + std::to_string(fields.size()));
      }
      const std::string name = s_col < width ? fields[s_col] : "success_rate";
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
      if (it == series.end()) {
        series.push_back({name, {}});
        it = series.end() - 1;
      }
      it->points.emplace_back(parse_number(fields[x_col], line_no), parse_number(fields[y_col], line_no));
    }
  }

  constexpr double W = 640, H = 400, left = 60, right = 20, top = 20, bottom = 50;
  const double pw = W - left - right;
  const double ph = H - top - bottom;
  double x_min = 0.0, x_max = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = first ? x : std::min(x_min, x);
      x_max = first ? x : std::max(x_max, x);
      first = false;
    }
  }
  if (x_max <= x_min) x_max = x_min + 1.0;
  const auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  const auto sy = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line class=\"axis\" x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(left + pw) +
         "\" y2=\"" + fmt(top + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line class=\"axis\" x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
         fmt(top + ph) + "\" stroke=\"black\"/>\n";
  for (const double y : {0.0, 0.5, 1.0}) {
    svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(sy(y) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
           fmt(y) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(left) + "\" y=\"" + fmt(top + ph + 16) + "\" font-size=\"11\">" + fmt(x_min) + "</text>\n";
  svg += "<text x=\"" + fmt(left + pw) + "\" y=\"" + fmt(top + ph + 16) +
         "\" font-size=\"11\" text-anchor=\"end\">" + fmt(x_max) + "</text>\n";
  svg += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(H - 10) + "\" font-size=\"13\" text-anchor=\"middle\">" +
         x_label + "</text>\n";
  svg += "<text x=\"15\" y=\"" + fmt(top + ph / 2) + "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         fmt(top + ph / 2) + ")\">success rate</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    svg += "<polyline data-series=\"" + series[i].name + "\" fill=\"none\" stroke=\"" + kColors[i % 6] +
           "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < series[i].points.size(); ++j) {
      if (j) svg += ' ';
      svg += fmt(sx(series[i].points[j].first)) + ',' + fmt(sy(series[i].points[j].second));
    }
    svg += "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void plot(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + csv_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string svg = plot_svg(buf.str());
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + svg_path.string());
  out << svg;
}

}  // namespace hindsight
