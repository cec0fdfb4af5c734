#pragma once

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

#include "levolve/diffusion.hpp"
#include "levolve/lgeodesic.hpp"
#include "levolve/monitors.hpp"
#include "levolve/transport.hpp"

namespace levolve {

// Decimal, 17 significant digits.
std::string format_number(double value);

// `abscissa,value` rows.
void write_series_csv(std::ostream& out, const MonitorSeries& series);
void write_xy_csv(std::ostream& out, const std::vector<double>& x, const std::vector<double>& y);

// name, property, slack, verdict, worst_violation.
nlohmann::json series_summary(const MonitorSeries& series);

// `node_index,tau,L,Lbar,valid` rows.
void write_field_csv(std::ostream& out, const LDistanceField& field);

// `i,j,pi_ij,cost_ij` rows for entries above `threshold`, then a
// `# total_cost=<c> mode=<m>` summary line.
void write_plan_csv(std::ostream& out, const TransportPlan& plan, double threshold = 0.0);

// `tau,node_index,u` rows.
void write_density_csv(std::ostream& out, const std::vector<DiffusionState>& snapshots);

// Static polyline plot of a series over its abscissa.
void write_series_svg(std::ostream& out, const MonitorSeries& series);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace levolve
