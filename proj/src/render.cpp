// Copyright 2026 The bpbnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "bpbnn/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace bpbnn {

namespace {

const char* const kRequiredColumns[] = {"scenario", "N",      "sigma_w", "branch",
                                        "quantity", "source", "value",   "stderr"};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, int line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("results line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::string fmt(double v, const char* f = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Point {
  double x;
  double y;
  double err;
};

struct Series {
  std::string label;
  std::string color;
  std::vector<Point> line;    // theory
  std::vector<Point> points;  // hmc
};

struct RefLine {
  double y;
  std::string color;
  std::string dash;
  std::string label;
};

struct Panel {
  std::string title;
  std::string ylabel;
  std::vector<Series> series;
  std::vector<RefLine> refs;
};

constexpr double kPanelW = 340.0;
constexpr double kPanelH = 280.0;
constexpr double kLeft = 62.0;
constexpr double kRight = 12.0;
constexpr double kTop = 56.0;
constexpr double kBottom = 44.0;

void draw_panel(std::ostringstream& svg, const Panel& panel, double ox, double oy) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  std::set<double> xs;
  auto see = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
    xs.insert(x);
  };
  for (const auto& s : panel.series) {
    for (const auto& p : s.line) see(p.x, p.y);
    for (const auto& p : s.points) {
      see(p.x, p.y - p.err);
      see(p.x, p.y + p.err);
    }
  }
  for (const auto& r : panel.refs) {
    ymin = std::min(ymin, r.y);
    ymax = std::max(ymax, r.y);
  }
  if (xs.empty()) {
    xmin = xmax = 1.0;
    xs.insert(1.0);
  }
  if (!std::isfinite(ymin)) ymin = ymax = 0.0;
  double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
  if (lx1 - lx0 < 1e-12) {
    lx0 -= 0.5;
    lx1 += 0.5;
  } else {
    const double pad = 0.05 * (lx1 - lx0);
    lx0 -= pad;
    lx1 += pad;
  }
  if (ymax - ymin < 1e-12 * std::max(1.0, std::abs(ymax))) {
    const double pad = std::max(1e-3, 0.1 * std::abs(ymax));
    ymin -= pad;
    ymax += pad;
  } else {
    const double pad = 0.06 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
  }
  const double pw = kPanelW - kLeft - kRight;
  const double ph = kPanelH - kTop - kBottom;
  auto px = [&](double x) { return ox + kLeft + pw * (std::log10(x) - lx0) / (lx1 - lx0); };
  auto py = [&](double y) { return oy + kTop + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

  svg << "<g>\n";
  svg << "<text x=\"" << fmt(ox + kPanelW / 2) << "\" y=\"" << fmt(oy + 16)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(panel.title) << "</text>\n";
  svg << "<rect x=\"" << fmt(ox + kLeft) << "\" y=\"" << fmt(oy + kTop) << "\" width=\""
      << fmt(pw) << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (double x : xs) {
    svg << "<line x1=\"" << fmt(px(x)) << "\" y1=\"" << fmt(oy + kTop + ph) << "\" x2=\""
        << fmt(px(x)) << "\" y2=\"" << fmt(oy + kTop + ph + 4) << "\" stroke=\"#000\"/>\n";
    svg << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(oy + kTop + ph + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(x, "%g") << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    svg << "<line x1=\"" << fmt(ox + kLeft - 4) << "\" y1=\"" << fmt(py(y)) << "\" x2=\""
        << fmt(ox + kLeft) << "\" y2=\"" << fmt(py(y)) << "\" stroke=\"#000\"/>\n";
    svg << "<text x=\"" << fmt(ox + kLeft - 6) << "\" y=\"" << fmt(py(y) + 3)
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(y, "%.3g") << "</text>\n";
  }
  svg << "<text x=\"" << fmt(ox + kLeft + pw / 2) << "\" y=\"" << fmt(oy + kPanelH - 8)
      << "\" text-anchor=\"middle\" font-size=\"11\">N</text>\n";
  svg << "<text x=\"" << fmt(ox + 14) << "\" y=\"" << fmt(oy + kTop + ph / 2)
      << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 " << fmt(ox + 14)
      << ' ' << fmt(oy + kTop + ph / 2) << ")\">" << escape(panel.ylabel) << "</text>\n";

  for (const auto& r : panel.refs) {
    svg << "<line x1=\"" << fmt(ox + kLeft) << "\" y1=\"" << fmt(py(r.y)) << "\" x2=\""
        << fmt(ox + kLeft + pw) << "\" y2=\"" << fmt(py(r.y)) << "\" stroke=\"" << r.color
        << "\" stroke-dasharray=\"" << r.dash << "\"/>\n";
  }
  for (const auto& s : panel.series) {
    if (!s.line.empty()) {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.line.size(); ++i)
        svg << (i ? " " : "") << fmt(px(s.line[i].x)) << ',' << fmt(py(s.line[i].y));
      svg << "\"/>\n";
      for (const auto& p : s.line)
        svg << "<circle cx=\"" << fmt(px(p.x)) << "\" cy=\"" << fmt(py(p.y)) << "\" r=\"2\" fill=\""
            << s.color << "\"/>\n";
    }
    for (const auto& p : s.points) {
      svg << "<line x1=\"" << fmt(px(p.x)) << "\" y1=\"" << fmt(py(p.y - p.err)) << "\" x2=\""
          << fmt(px(p.x)) << "\" y2=\"" << fmt(py(p.y + p.err)) << "\" stroke=\"" << s.color
          << "\"/>\n";
      svg << "<rect x=\"" << fmt(px(p.x) - 3) << "\" y=\"" << fmt(py(p.y) - 3)
          << "\" width=\"6\" height=\"6\" fill=\"white\" stroke=\"" << s.color << "\"/>\n";
    }
  }
  // Legend.
  double ly = oy + 30;
  double lx = ox + kLeft;
  auto entry = [&](const std::string& c, const std::string& dash, const std::string& label) {
    svg << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 16)
        << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << c << "\" stroke-dasharray=\"" << dash
        << "\"/>\n";
    svg << "<text x=\"" << fmt(lx + 19) << "\" y=\"" << fmt(ly + 3) << "\" font-size=\"9\">"
        << escape(label) << "</text>\n";
    lx += 24 + 5.2 * static_cast<double>(label.size());
    if (lx > ox + kPanelW - 60) {
      lx = ox + kLeft;
      ly += 11;
    }
  };
  for (const auto& s : panel.series) entry(s.color, "none", s.label);
  for (const auto& r : panel.refs) entry(r.color, r.dash, r.label);
  svg << "</g>\n";
}

std::string draw(const std::string& title, const std::vector<Panel>& panels) {
  const double width = kPanelW * static_cast<double>(std::max<std::size_t>(1, panels.size()));
  const double height = kPanelH + 24;
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height)
      << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt(width / 2) << "\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < panels.size(); ++i)
    draw_panel(svg, panels[i], kPanelW * static_cast<double>(i), 24.0);
  svg << "</svg>\n";
  return svg.str();
}

using Key = std::tuple<double, std::string, std::string, std::string>;  // sigma, branch, q, src

}  // namespace

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  std::string missing;
  for (const char* c : kRequiredColumns)
    if (!col.count(c)) missing += (missing.empty() ? "" : ", ") + std::string(c);
  if (!missing.empty()) throw std::runtime_error("results: missing columns: " + missing);

  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::runtime_error("results line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " cells");
    ResultRow r;
    r.scenario = cells[col["scenario"]];
    r.width = static_cast<long long>(to_double(cells[col["N"]], lineno));
    r.sigma_w = to_double(cells[col["sigma_w"]], lineno);
    r.branch = cells[col["branch"]];
    r.quantity = cells[col["quantity"]];
    r.source = cells[col["source"]];
    r.value = to_double(cells[col["value"]], lineno);
    if (const auto& e = cells[col["stderr"]]; !e.empty()) r.std_error = to_double(e, lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_results_csv(buf.str());
}

PlotSpec parse_plot_spec(const std::string& json_text) {
  PlotSpec spec;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
    if (doc.contains("title")) spec.title = doc["title"].get<std::string>();
    if (doc.contains("teacher_norms"))
      spec.teacher_norms = doc["teacher_norms"].get<std::vector<double>>();
    if (doc.contains("normalized")) spec.normalized = doc["normalized"].get<bool>();
    if (doc.contains("prefix")) spec.prefix = doc["prefix"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("plot spec: ") + e.what());
  }
  return spec;
}

std::vector<RenderedPlot> render_plots(const std::vector<ResultRow>& rows, const PlotSpec& spec) {
  // (sigma, branch, quantity, source) -> N -> (value, stderr)
  std::map<Key, std::map<long long, std::pair<double, double>>> table;
  std::set<double> sigmas;
  std::set<std::string> branches;
  for (const auto& r : rows) {
    table[{r.sigma_w, r.branch, r.quantity, r.source}][r.width] = {r.value,
                                                                  r.std_error.value_or(0.0)};
    sigmas.insert(r.sigma_w);
    if (r.branch != "all") branches.insert(r.branch);
  }
  auto collect = [&](const Key& key) {
    std::vector<Point> out;
    auto it = table.find(key);
    if (it == table.end()) return out;
    for (const auto& [n, v] : it->second) out.push_back({static_cast<double>(n), v.first, v.second});
    return out;
  };

  std::vector<RenderedPlot> plots;
  std::vector<Panel> norm_panels;
  for (double s : sigmas) {
    Panel p;
    p.title = "sigma_w = " + fmt(s, "%g");
    p.ylabel = "<|a_l|^2> sigma_w^2 / N";
    std::size_t i = 0;
    for (const auto& b : branches) {
      Series ser;
      ser.label = "branch " + b;
      ser.color = color(i++);
      ser.line = collect({s, b, "norm", "theory"});
      ser.points = collect({s, b, "norm", "hmc"});
      if (!ser.line.empty() || !ser.points.empty()) p.series.push_back(std::move(ser));
    }
    if (p.series.empty()) continue;
    p.refs.push_back({s * s * s * s, "#555", "6,3", "GP"});
    for (std::size_t l = 0; l < spec.teacher_norms.size(); ++l)
      p.refs.push_back({spec.teacher_norms[l], color(l), "2,2", "teacher " + std::to_string(l)});
    norm_panels.push_back(std::move(p));
  }
  if (!norm_panels.empty())
    plots.push_back({spec.prefix + "_norms.svg", draw(spec.title + " branch norms", norm_panels)});

  const std::string suffix = spec.normalized ? "_normalized" : "";
  std::vector<Panel> bv_panels;
  for (const std::string q : {"bias", "variance", "generalization"}) {
    Panel p;
    p.title = q;
    p.ylabel = q + (spec.normalized ? " / <y^2>" : "");
    std::size_t i = 0;
    for (double s : sigmas) {
      Series ser;
      ser.label = "sigma_w=" + fmt(s, "%g");
      ser.color = color(i++);
      ser.line = collect({s, "all", q + suffix, "theory"});
      ser.points = collect({s, "all", q + suffix, "hmc"});
      if (!ser.line.empty() || !ser.points.empty()) p.series.push_back(std::move(ser));
    }
    if (!p.series.empty()) bv_panels.push_back(std::move(p));
  }
  if (!bv_panels.empty())
    plots.push_back(
        {spec.prefix + "_bias_variance.svg", draw(spec.title + " bias and variance", bv_panels)});
  return plots;
}

std::vector<std::filesystem::path> render(const std::filesystem::path& csv,
                                          const std::filesystem::path& spec_path,
                                          std::optional<std::filesystem::path> out_dir) {
  const auto rows = read_results_csv(csv);
  std::ifstream in(spec_path);
  if (!in) throw std::runtime_error("cannot open " + spec_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const PlotSpec spec = parse_plot_spec(buf.str());
  const auto dir = out_dir.value_or(csv.parent_path());
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& plot : render_plots(rows, spec)) {
    const auto path = dir / plot.name;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << plot.svg;
    written.push_back(path);
  }
  return written;
}

}  // namespace bpbnn
