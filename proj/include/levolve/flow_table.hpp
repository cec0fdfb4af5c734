#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace levolve {

// Per-node, per-time samples of a one-dimensional evolving metric g_00 and
// flow tensor S_00 on a uniform periodic mesh.
//
// Text format:
//   nodes=<N> taus=<t0,t1,...>
//   <node_index> <tau_index> <g_00> <S_00>
//   ...
// Blank lines and lines starting with '#' are ignored.
struct FlowTable {
  std::size_t nodes = 0;
  std::vector<double> taus;
  std::vector<double> metric;  // [tau_index * nodes + node]
  std::vector<double> flow;

  double g(std::size_t node, std::size_t tau_index) const {
    return metric[tau_index * nodes + node];
  }
  double s(std::size_t node, std::size_t tau_index) const {
    return flow[tau_index * nodes + node];
  }
};

FlowTable read_flow_table(std::istream& in);
FlowTable load_flow_table(const std::string& path);
void write_flow_table(std::ostream& out, const FlowTable& table);

}  // namespace levolve
