#include "levolve/serialize.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "levolve/errors.hpp"

namespace levolve {

std::string format_number(double value) { return fmt::format("{:.17g}", value); }

void write_xy_csv(std::ostream& out, const std::vector<double>& x, const std::vector<double>& y) {
  out << "abscissa,value\n";
  for (std::size_t k = 0; k < x.size() && k < y.size(); ++k) {
    out << format_number(x[k]) << ',' << format_number(y[k]) << '\n';
  }
}

void write_series_csv(std::ostream& out, const MonitorSeries& series) {
  write_xy_csv(out, series.grid, series.values);
}

nlohmann::json series_summary(const MonitorSeries& series) {
  nlohmann::json j;
  j["name"] = series.name;
  j["property"] = std::string(to_string(series.property));
  j["abscissa"] = std::string(to_string(series.abscissa));
  j["slack"] = series.slack;
  j["verdict"] = series.pass ? "pass" : "fail";
  j["worst_violation"] = series.worst_violation;
  if (series.property == Property::bounded_above) j["bound"] = series.bound;
  if (!series.note.empty()) j["note"] = series.note;
  return j;
}

void write_field_csv(std::ostream& out, const LDistanceField& field) {
  out << "node_index,tau,L,Lbar,valid\n";
  for (std::size_t ti = 0; ti < field.taus.size(); ++ti) {
    for (std::size_t k = 0; k < field.nodes.size(); ++k) {
      const std::size_t e = field.index(ti, k);
      out << field.nodes[k] << ',' << format_number(field.taus[ti]) << ','
          << format_number(field.L[e]) << ',' << format_number(field.Lbar[e]) << ','
          << (field.valid[e] ? 1 : 0) << '\n';
    }
  }
}

void write_plan_csv(std::ostream& out, const TransportPlan& plan, double threshold) {
  out << "i,j,pi_ij,cost_ij\n";
  for (Eigen::Index i = 0; i < plan.plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.plan.cols(); ++j) {
      if (plan.plan(i, j) > threshold) {
        out << i << ',' << j << ',' << format_number(plan.plan(i, j)) << ','
            << format_number(plan.cost_matrix(i, j)) << '\n';
      }
    }
  }
  out << "# total_cost=" << format_number(plan.cost) << " mode=" << plan.mode.describe() << '\n';
}

void write_density_csv(std::ostream& out, const std::vector<DiffusionState>& snapshots) {
  out << "tau,node_index,u\n";
  for (const DiffusionState& s : snapshots) {
    for (std::size_t i = 0; i < s.u.size(); ++i) {
      out << format_number(s.tau) << ',' << i << ',' << format_number(s.u[i]) << '\n';
    }
  }
}

void write_series_svg(std::ostream& out, const MonitorSeries& series) {
  constexpr double width = 640.0, height = 400.0, margin = 56.0;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < series.grid.size() && k < series.values.size(); ++k) {
    if (std::isfinite(series.grid[k]) && std::isfinite(series.values[k])) {
      pts.emplace_back(series.grid[k], series.values[k]);
    }
  }
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (!pts.empty()) {
    x0 = x1 = pts.front().first;
    y0 = y1 = pts.front().second;
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 - x0 <= 0.0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 <= 0.0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); };

  out << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n",
      width, height);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << fmt::format(
      "<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{2}\" fill=\"none\" stroke=\"#888\"/>\n",
      margin, width - 2 * margin, height - 2 * margin);
  out << fmt::format(
      "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{} ({}, {})</text>\n",
      margin, series.name, to_string(series.property), series.pass ? "pass" : "fail");
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.6g}</text>\n", margin,
      height - margin + 16, x0);
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" "
      "text-anchor=\"end\">{:.6g}</text>\n",
      width - margin, height - margin + 16, x1);
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" "
      "text-anchor=\"end\">{:.6g}</text>\n",
      margin - 4, height - margin, y0);
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" "
      "text-anchor=\"end\">{:.6g}</text>\n",
      margin - 4, margin + 10, y1);
  out << fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" "
      "text-anchor=\"middle\">{}</text>\n",
      width / 2, height - 12, to_string(series.abscissa));
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < pts.size(); ++k) {
    out << (k ? " " : "") << fmt::format("{:.3f},{:.3f}", px(pts[k].first), py(pts[k].second));
  }
  out << "\"/>\n";
  for (const auto& [x, y] : pts) {
    out << fmt::format("<circle cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"3\" fill=\"#1f77b4\"/>\n", px(x),
                       py(y));
  }
  out << "</svg>\n";
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(fmt::format("cannot write {}", path));
  f << contents;
  if (!f) throw Error(fmt::format("failed writing {}", path));
}

}  // namespace levolve
