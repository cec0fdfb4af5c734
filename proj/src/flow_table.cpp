#include "levolve/flow_table.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "levolve/errors.hpp"

namespace levolve {
namespace {

double parse_double(const std::string& token, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || !std::isfinite(value)) {
    throw ParseError(fmt::format("flow table line {}: bad number '{}'", line, token));
  }
  return value;
}

std::size_t parse_index(const std::string& token, std::size_t line) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError(fmt::format("flow table line {}: bad index '{}'", line, token));
  }
  return value;
}

}  // namespace

FlowTable read_flow_table(std::istream& in) {
  FlowTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<char> seen;

  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);

    if (!have_header) {
      std::string token;
      bool got_nodes = false, got_taus = false;
      while (fields >> token) {
        if (token.rfind("nodes=", 0) == 0) {
          table.nodes = parse_index(token.substr(6), line_no);
          got_nodes = true;
        } else if (token.rfind("taus=", 0) == 0) {
          std::stringstream list(token.substr(5));
          std::string item;
          while (std::getline(list, item, ',')) {
            table.taus.push_back(parse_double(item, line_no));
          }
          got_taus = true;
        } else {
          throw ParseError(fmt::format("flow table line {}: unexpected header field '{}'",
                                       line_no, token));
        }
      }
      if (!got_nodes || !got_taus || table.nodes == 0 || table.taus.size() < 2) {
        throw ParseError(fmt::format(
            "flow table line {}: header must be 'nodes=<N> taus=<t0,t1,...>' with N > 0 "
            "and at least two times",
            line_no));
      }
      if (!std::is_sorted(table.taus.begin(), table.taus.end()) ||
          std::adjacent_find(table.taus.begin(), table.taus.end()) != table.taus.end()) {
        throw ParseError(fmt::format("flow table line {}: taus must be strictly increasing",
                                     line_no));
      }
      const std::size_t total = table.nodes * table.taus.size();
      table.metric.assign(total, 0.0);
      table.flow.assign(total, 0.0);
      seen.assign(total, 0);
      have_header = true;
      continue;
    }

    std::vector<std::string> tokens;
    for (std::string token; fields >> token;) tokens.push_back(token);
    if (tokens.size() != 4) {
      throw ParseError(fmt::format(
          "flow table line {}: expected 'node tau_index g S' (4 fields), got {}", line_no,
          tokens.size()));
    }
    const auto node = parse_index(tokens[0], line_no);
    const auto ti = parse_index(tokens[1], line_no);
    if (node >= table.nodes || ti >= table.taus.size()) {
      throw ParseError(fmt::format("flow table line {}: index out of range", line_no));
    }
    const std::size_t k = ti * table.nodes + node;
    if (seen[k]) {
      throw ParseError(fmt::format("flow table line {}: duplicate row ({}, {})", line_no,
                                   node, ti));
    }
    seen[k] = 1;
    table.metric[k] = parse_double(tokens[2], line_no);
    table.flow[k] = parse_double(tokens[3], line_no);
  }

  if (!have_header) throw ParseError("flow table: missing header line");
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ParseError("flow table: missing rows (every node and time index needs one row)");
  }
  return table;
}

FlowTable load_flow_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open flow table '{}'", path));
  return read_flow_table(in);
}

void write_flow_table(std::ostream& out, const FlowTable& table) {
  out << "nodes=" << table.nodes << " taus=";
  for (std::size_t k = 0; k < table.taus.size(); ++k) {
    out << (k ? "," : "") << fmt::format("{:.17g}", table.taus[k]);
  }
  out << '\n';
  for (std::size_t t = 0; t < table.taus.size(); ++t) {
    for (std::size_t i = 0; i < table.nodes; ++i) {
      out << fmt::format("{} {} {:.17g} {:.17g}\n", i, t, table.g(i, t), table.s(i, t));
    }
  }
}

}  // namespace levolve
