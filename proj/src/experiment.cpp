#include "levolve/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "levolve/diffusion.hpp"
#include "levolve/errors.hpp"
#include "levolve/lgeodesic.hpp"
#include "levolve/serialize.hpp"

#ifndef LEVOLVE_VERSION
#define LEVOLVE_VERSION "0.0.0"
#endif

namespace levolve {

std::string_view tool_version() { return LEVOLVE_VERSION; }

namespace {

using boost::property_tree::ptree;

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && s[i] == '(') ++depth;
    if (i < s.size() && s[i] == ')') --depth;
    if (i == s.size() || (s[i] == ',' && depth == 0)) {
      std::string item = trim(s.substr(start, i - start));
      if (!item.empty()) out.push_back(item);
      start = i + 1;
    }
  }
  return out;
}

// Recursive descent over + - * / ^ with unary signs, pi and a few functions.
class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : s_(text) {}

  double parse() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(fmt::format("bad expression '{}': {}", s_, what));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view name = s_.substr(start, pos_ - start);
      if (name == "pi") return std::numbers::pi;
      static const std::map<std::string_view, double (*)(double)> functions{
          {"ln", [](double x) { return std::log(x); }},
          {"exp", [](double x) { return std::exp(x); }},
          {"sqrt", [](double x) { return std::sqrt(x); }},
          {"cos", [](double x) { return std::cos(x); }},
          {"sin", [](double x) { return std::sin(x); }},
      };
      const auto it = functions.find(name);
      if (it == functions.end()) fail(fmt::format("unknown name '{}'", name));
      if (!eat('(')) fail("expected '(' after function name");
      const double arg = expr();
      if (!eat(')')) fail("missing ')'");
      return it->second(arg);
    }
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc()) fail("expected a number");
    pos_ = static_cast<std::size_t>(end - s_.data());
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

// Line numbers of sections and keys, recovered from the raw text so that
// semantic errors can point at the offending line.
struct LineIndex {
  std::map<std::string, int> sections;
  std::map<std::string, std::map<std::string, int>> keys;

  explicit LineIndex(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      const std::string t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(std::string_view(t).substr(1, t.size() - 2));
        sections.emplace(section, n);
        keys[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq != std::string::npos) keys[section].emplace(trim(t.substr(0, eq)), n);
    }
  }
};

class Section {
 public:
  Section(const std::string& source, const LineIndex& lines, std::string name, const ptree& tree)
      : source_(source), lines_(lines), name_(std::move(name)), tree_(tree) {}

  const std::string& name() const { return name_; }

  int line(const std::string& key) const {
    const auto s = lines_.keys.find(name_);
    if (s != lines_.keys.end()) {
      const auto k = s->second.find(key);
      if (k != s->second.end()) return k->second;
    }
    const auto h = lines_.sections.find(name_);
    return h == lines_.sections.end() ? 0 : h->second;
  }

  std::string where(const std::string& key) const {
    const std::string field = name_.empty() ? key : fmt::format("[{}] {}", name_, key);
    return fmt::format("{}:{}: {}", source_, line(key), field);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw SemanticError(fmt::format("{}: {}", where(key), message));
  }

  bool has(const std::string& key) const { return tree_.find(key) != tree_.not_found(); }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto it = tree_.find(key);
    if (it == tree_.not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  std::string text(const std::string& key, const std::string& fallback) {
    return raw(key).value_or(fallback);
  }

  std::string required_text(const std::string& key) {
    auto v = raw(key);
    if (!v || v->empty()) fail(key, "missing value");
    return *v;
  }

  std::optional<double> number(const std::string& key) {
    const auto v = raw(key);
    if (!v) return std::nullopt;
    try {
      const double x = evaluate_expression(*v);
      if (!std::isfinite(x)) fail(key, fmt::format("'{}' is not finite", *v));
      return x;
    } catch (const ParseError& e) {
      fail(key, e.what());
    }
  }

  double number(const std::string& key, double fallback) { return number(key).value_or(fallback); }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const auto v = number(key);
    if (!v) return fallback;
    if (*v < 0.0 || std::floor(*v) != *v) fail(key, "must be a nonnegative integer");
    return static_cast<std::size_t>(*v);
  }

  std::vector<double> list(const std::string& key) {
    const auto v = raw(key);
    std::vector<double> out;
    if (!v) return out;
    for (const std::string& item : split_list(*v)) {
      try {
        out.push_back(evaluate_expression(item));
      } catch (const ParseError& e) {
        fail(key, e.what());
      }
      if (!std::isfinite(out.back())) fail(key, fmt::format("'{}' is not finite", item));
    }
    return out;
  }

  std::vector<std::string> names(const std::string& key) {
    const auto v = raw(key);
    return v ? split_list(*v) : std::vector<std::string>{};
  }

  bool flag(const std::string& key, bool fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    std::string t = *v;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
    if (t == "false" || t == "no" || t == "off" || t == "0") return false;
    fail(key, fmt::format("'{}' is not a boolean", *v));
  }

  // Keys present in the file but never read.
  void finish() const {
    for (const auto& [key, child] : tree_) {
      if (!used_.count(key)) {
        throw ParseError(fmt::format("{}: unknown key", where(key)));
      }
    }
  }

 private:
  const std::string& source_;
  const LineIndex& lines_;
  std::string name_;
  const ptree& tree_;
  std::set<std::string> used_;
};

void require_times(Section& sec, const std::string& key, const std::vector<double>& taus,
                   const TimeInterval& domain) {
  for (double t : taus) {
    if (!(t > 0.0)) sec.fail(key, fmt::format("time {} must be positive", t));
    if (!domain.contains(t)) {
      sec.fail(key, fmt::format("time {} lies outside the flow interval [{}, {}]", t, domain.lo,
                                domain.hi));
    }
  }
}

void require_increasing(Section& sec, const std::string& key, const std::vector<double>& v) {
  if (v.empty()) sec.fail(key, "needs at least one value");
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (!(v[k] > v[k - 1])) sec.fail(key, "values must be strictly increasing");
  }
}

GeometryConfig parse_geometry(Section& sec, const std::string& base_dir) {
  GeometryConfig g;
  const std::string model = sec.required_text("model");
  FlowKind kind;
  try {
    kind = flow_kind_from_string(model);
  } catch (const Error&) {
    sec.fail("model", fmt::format("unknown flow model '{}'", model));
  }
  g.domain.lo = sec.number("tau_min", 0.5);
  g.domain.hi = sec.number("tau_max", 5.0);
  if (!(g.domain.lo > 0.0)) sec.fail("tau_min", "must be positive (need 0 < tau1 < tau2)");
  if (!(g.domain.hi > g.domain.lo)) sec.fail("tau_max", "must exceed tau_min");
  g.nodes = sec.count("N", 64);
  g.curve_samples = sec.count("curve_samples", 64);
  if (g.curve_samples < 32) sec.fail("curve_samples", "needs at least 32 samples");

  const double circumference = sec.number("circumference", 2.0 * std::numbers::pi);
  const double r0 = sec.number("r0", 1.0);
  const double phi0_squared = sec.number("phi0_squared", 10.0);
  const double alpha = sec.number("alpha", 1.0);
  const double c = sec.number("c", 1.0);
  const auto table = sec.raw("table");

  switch (kind) {
    case FlowKind::static_flat_circle:
      if (!(circumference > 0.0)) sec.fail("circumference", "must be positive");
      g.model = FlowModel::flat_circle(circumference);
      break;
    case FlowKind::static_round_sphere:
    case FlowKind::ricci_round_sphere:
      if (!(r0 > 0.0)) sec.fail("r0", "must be positive");
      g.model = kind == FlowKind::static_round_sphere ? FlowModel::static_sphere(r0)
                                                      : FlowModel::ricci_sphere(r0);
      break;
    case FlowKind::dilaton_circle: {
      if (!(phi0_squared > 0.0)) sec.fail("phi0_squared", "must be positive");
      if (!(alpha > 0.0)) sec.fail("alpha", "must be positive");
      const double end = phi0_squared - 2.0 * alpha * c * c * g.domain.hi;
      if (!(end > 0.0)) {
        sec.fail("tau_max",
                 fmt::format("metric degenerates: phi0^2 - 2 alpha c^2 tau_max = {} <= 0", end));
      }
      g.model = FlowModel::dilaton(phi0_squared, alpha, c);
      break;
    }
    case FlowKind::custom_tabulated: {
      if (!table) sec.fail("table", "custom_tabulated needs a table file");
      std::filesystem::path p(*table);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      g.table_path = p.string();
      try {
        auto t = std::make_shared<FlowTable>(load_flow_table(g.table_path));
        if (sec.has("N") && g.nodes != t->nodes) {
          sec.fail("N", fmt::format("table has {} nodes", t->nodes));
        }
        g.nodes = t->nodes;
        g.model = FlowModel::tabulated(std::move(t));
      } catch (const SemanticError&) {
        throw;
      } catch (const Error& e) {
        sec.fail("table", e.what());
      }
      break;
    }
  }
  if (g.nodes < 16) sec.fail("N", "needs at least 16 nodes");
  if (g.model.dimension() == 2 && g.nodes % 2 != 0) sec.fail("N", "sphere meshes need even N");
  try {
    (void)make_geometry(g);
  } catch (const Error& e) {
    sec.fail("model", e.what());
  }
  return g;
}

MeasureConfig parse_measure(Section& sec, std::string name, const GeometryConfig& g) {
  MeasureConfig m;
  m.name = std::move(name);
  const std::string profile = sec.text("profile", "uniform");
  if (profile == "uniform") m.profile = ProfileKind::uniform;
  else if (profile == "bump") m.profile = ProfileKind::bump;
  else if (profile == "two_point") m.profile = ProfileKind::two_point;
  else sec.fail("profile", fmt::format("unknown profile '{}' (uniform, bump, two_point)", profile));
  m.center = sec.number("center", 0.0);
  m.width = sec.number("width", m.profile == ProfileKind::two_point ? 0.25 : 0.3);
  m.a = sec.number("a", 0.0);
  m.b = sec.number("b", std::numbers::pi);
  m.tau = sec.number("tau");
  if (!(m.width > 0.0)) sec.fail("width", "must be positive");
  if (m.tau) require_times(sec, "tau", {*m.tau}, g.domain);
  return m;
}

double measure_start(const MeasureConfig& m, const GeometryConfig& g) {
  return m.tau.value_or(g.domain.lo);
}

MonitorConfig parse_monitor(Section& sec, std::string name, const GeometryConfig& g,
                            const std::vector<MeasureConfig>& measures) {
  MonitorConfig m;
  m.name = std::move(name);
  const std::string kind = sec.required_text("kind");
  try {
    m.kind = monitor_kind_from_string(kind);
  } catch (const Error&) {
    sec.fail("kind", fmt::format("unknown monitor kind '{}'", kind));
  }
  const double default_slack = m.kind == MonitorKind::scaling_identity ? 1e-4
                               : m.kind == MonitorKind::d_nonneg       ? 1e-8
                                                                       : 1e-3;
  m.slack = sec.number("slack", default_slack);
  if (!(m.slack > 0.0)) sec.fail("slack", "must be positive");

  m.measures = sec.names("measures");
  for (const std::string& ref : m.measures) {
    const bool known = std::any_of(measures.begin(), measures.end(),
                                   [&](const MeasureConfig& x) { return x.name == ref; });
    if (!known) sec.fail("measures", fmt::format("no [measure.{}] section", ref));
  }
  auto need_measures = [&](std::size_t k) {
    if (m.measures.size() != k) {
      sec.fail("measures", fmt::format("'{}' needs {} measure(s)", kind, k));
    }
  };
  auto start_of = [&](std::size_t k) {
    const auto it = std::find_if(measures.begin(), measures.end(),
                                 [&](const MeasureConfig& x) { return x.name == m.measures[k]; });
    return measure_start(*it, g);
  };

  m.taus = sec.list("taus");
  m.s_grid = sec.list("s_grid");
  const std::vector<double> tau_bar = sec.list("tau_bar");
  const bool has_pair = sec.has("tau1") || sec.has("tau2");
  m.tau1 = sec.number("tau1", 1.0);
  m.tau2 = sec.number("tau2", 4.0);
  m.lambda = sec.number("lambda", 0.5);
  m.points = sec.count("points", 9);
  m.longitudes = sec.count("longitudes", 16);
  m.pairs = sec.count("pairs", 20);
  const std::string potential = sec.text("potential", "0");
  try {
    m.potential = parse_potential(potential);
  } catch (const ParseError& e) {
    sec.fail("potential", e.what());
  }
  const std::string solver = sec.text("solver", "exact");
  const double epsilon = sec.number("epsilon", 1e-2);
  if (solver == "exact") m.solver = SolverMode::exact();
  else if (solver == "entropic") {
    if (!(epsilon > 0.0)) sec.fail("epsilon", "must be positive");
    m.solver = SolverMode::entropic(epsilon);
  } else {
    sec.fail("solver", fmt::format("unknown solver '{}' (exact, entropic)", solver));
  }
  m.base_point = sec.number("base_point", 0.0);
  m.base_offset = sec.number("base_offset");

  auto check_pair = [&] {
    if (!(m.tau1 > 0.0)) sec.fail("tau1", "must be positive (need 0 < tau1 < tau2)");
    if (!(m.tau2 > m.tau1)) sec.fail("tau2", "must exceed tau1");
    require_times(sec, "tau1", {m.tau1}, g.domain);
    require_times(sec, "tau2", {m.tau2}, g.domain);
  };

  switch (m.kind) {
    case MonitorKind::theta: {
      need_measures(2);
      if (tau_bar.size() != 2) sec.fail("tau_bar", "needs two times");
      m.tau_bar1 = tau_bar[0];
      m.tau_bar2 = tau_bar[1];
      if (!(m.tau_bar1 > 0.0)) sec.fail("tau_bar", "times must be positive (need 0 < tau1 < tau2)");
      if (!(m.tau_bar2 > m.tau_bar1)) sec.fail("tau_bar", "needs tau_bar1 < tau_bar2");
      require_increasing(sec, "s_grid", m.s_grid);
      for (double s : m.s_grid) {
        const double t1 = m.tau_bar1 * std::exp(s), t2 = m.tau_bar2 * std::exp(s);
        require_times(sec, "s_grid", {t1, t2}, g.domain);
        if (t1 < start_of(0) || t2 < start_of(1)) {
          sec.fail("s_grid", fmt::format("s = {} reaches before a diffusion starts", s));
        }
      }
      break;
    }
    case MonitorKind::w_entropy:
      need_measures(1);
      require_increasing(sec, "taus", m.taus);
      require_times(sec, "taus", m.taus, g.domain);
      if (m.taus.front() < start_of(0)) sec.fail("taus", "starts before the diffusion");
      break;
    case MonitorKind::min_lbar_gap:
    case MonitorKind::reduced_volume: {
      need_measures(0);
      require_increasing(sec, "taus", m.taus);
      require_times(sec, "taus", m.taus, g.domain);
      const double eps = m.base_offset.value_or(1e-3 * m.taus.front());
      if (!(eps > 0.0) || !(eps < m.taus.front())) {
        sec.fail("base_offset", "must lie in (0, first grid time)");
      }
      if (!g.domain.contains(eps)) {
        sec.fail("base_offset",
                 fmt::format("base time {} lies outside the flow interval; lower tau_min", eps));
      }
      m.base_offset = eps;
      break;
    }
    case MonitorKind::convexity:
      need_measures(1);
      check_pair();
      if (m.points < 2) sec.fail("points", "needs at least two points");
      break;
    case MonitorKind::prekopa_leindler:
      need_measures(2);
      check_pair();
      if (!(m.lambda > 0.0 && m.lambda < 1.0)) sec.fail("lambda", "must lie in (0, 1)");
      if (m.longitudes < 1) sec.fail("longitudes", "must be positive");
      break;
    case MonitorKind::scaling_identity:
      need_measures(0);
      if (!has_pair) {
        m.tau1 = g.domain.lo;
        m.tau2 = g.domain.hi;
      }
      check_pair();
      if (m.pairs < 1) sec.fail("pairs", "must be positive");
      break;
    case MonitorKind::transport_bound:
      need_measures(2);
      check_pair();
      break;
    case MonitorKind::d_nonneg:
      need_measures(0);
      require_increasing(sec, "taus", m.taus);
      require_times(sec, "taus", m.taus, g.domain);
      break;
  }
  return m;
}

std::vector<double> make_profile(const Geometry& geom, const MeasureConfig& m, double tau) {
  switch (m.profile) {
    case ProfileKind::uniform: return uniform_profile(geom, tau);
    case ProfileKind::bump: return bump_profile(geom, tau, m.center, m.width);
    case ProfileKind::two_point: return two_point_profile(geom, tau, m.a, m.b, m.width);
  }
  return {};
}

std::string csv_of(const std::function<void(std::ostream&)>& write) {
  std::ostringstream s;
  write(s);
  return s.str();
}

// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

MonitorOutcome run_monitor(const Geometry& geom, const ExperimentConfig& cfg,
                           const MonitorConfig& mon, const CurveOptions& co) {
  MonitorOutcome out;
  out.name = mon.name;
  out.kind = mon.kind;
  auto measure = [&](std::size_t k) -> const MeasureConfig& {
    return cfg.measure(mon.measures[k]);
  };
  auto diffusion = [&](std::size_t k) {
    const MeasureConfig& m = measure(k);
    const double start = measure_start(m, cfg.geometry);
    return Diffusion(geom, DiffusionState{make_profile(geom, m, start), start});
  };

  switch (mon.kind) {
    case MonitorKind::theta: {
      const Diffusion d1 = diffusion(0), d2 = diffusion(1);
      out.series = theta_series(d1, d2, mon.tau_bar1, mon.tau_bar2, mon.s_grid, mon.slack,
                                mon.solver, co);
      break;
    }
    case MonitorKind::w_entropy: {
      const Diffusion d = diffusion(0);
      out.series = w_entropy_series(d, mon.taus, mon.slack);
      std::vector<DiffusionState> snaps;
      for (double t : mon.taus) snaps.push_back(d.at(t));
      out.artifacts.push_back({mon.name + "_density.csv",
                               csv_of([&](std::ostream& s) { write_density_csv(s, snaps); })});
      break;
    }
    case MonitorKind::min_lbar_gap:
    case MonitorKind::reduced_volume: {
      const LDistanceField field =
          l_distance_field(geom, mon.base_point, *mon.base_offset, mon.taus, co);
      out.series = mon.kind == MonitorKind::min_lbar_gap
                       ? min_lbar_gap(geom, field, mon.slack)
                       : reduced_volume_series(geom, field, mon.slack);
      out.artifacts.push_back({mon.name + "_field.csv",
                               csv_of([&](std::ostream& s) { write_field_csv(s, field); })});
      break;
    }
    case MonitorKind::convexity: {
      const DiscreteMeasure nu1 =
          DiscreteMeasure::from_density(geom, make_profile(geom, measure(0), mon.tau1), mon.tau1);
      const PotentialField phi = PotentialField::from_cosines(geom, mon.potential);
      out.series = convexity_profile(geom, nu1, phi, mon.tau1, mon.tau2, mon.points, mon.slack, co)
                       .series;
      break;
    }
    case MonitorKind::prekopa_leindler: {
      PLOptions opts;
      opts.longitudes = mon.longitudes;
      opts.slack = mon.slack;
      opts.curve = co;
      const PLReport r = pl_check(geom, make_profile(geom, measure(0), mon.tau1),
                                  make_profile(geom, measure(1), mon.tau2), mon.lambda, mon.tau1,
                                  mon.tau2, opts);
      out.series = make_series("prekopa_leindler_deficit", Abscissa::index, {0.0},
                               {r.rhs - r.lhs}, Property::bounded_above, mon.slack, 0.0);
      out.series.note = fmt::format("tau_bar {:.17g}, lhs {:.17g}, rhs {:.17g}, margin {:.17g}",
                                    r.tau_bar, r.lhs, r.rhs, r.margin);
      out.artifacts.push_back({mon.name + "_v.csv", csv_of([&](std::ostream& s) {
                                 write_xy_csv(s, geom.nodes(), r.v);
                               })});
      break;
    }
    case MonitorKind::scaling_identity: {
      std::mt19937_64 rng(cfg.seed);
      std::vector<PairSample> pairs;
      for (std::size_t k = 0; k < mon.pairs; ++k) {
        PairSample p;
        p.x = 2.0 * std::numbers::pi * unit_draw(rng);
        p.y = 2.0 * std::numbers::pi * unit_draw(rng);
        double a = mon.tau1 + (mon.tau2 - mon.tau1) * unit_draw(rng);
        double b = mon.tau1 + (mon.tau2 - mon.tau1) * unit_draw(rng);
        if (a > b) std::swap(a, b);
        if (b - a < 1e-3 * (mon.tau2 - mon.tau1)) b = std::min(mon.tau2, a + 0.1 * (mon.tau2 - mon.tau1));
        if (b <= a) a = b - 0.1 * (mon.tau2 - mon.tau1);
        p.tau1 = a;
        p.tau2 = b;
        pairs.push_back(p);
      }
      out.series = scaling_identity_check(geom, pairs, mon.slack, co);
      break;
    }
    case MonitorKind::transport_bound: {
      const DiscreteMeasure n1 =
          DiscreteMeasure::from_density(geom, make_profile(geom, measure(0), mon.tau1), mon.tau1);
      const DiscreteMeasure n2 =
          DiscreteMeasure::from_density(geom, make_profile(geom, measure(1), mon.tau2), mon.tau2);
      const TransportBoundReport r = transport_bound_check(geom, n1, n2, mon.slack, mon.solver, co);
      out.series = make_series("transport_bound", Abscissa::index, {0.0}, {r.lhs},
                               Property::bounded_above, mon.slack, r.bound);
      out.series.note = fmt::format("{} pairs, {} near-cut skipped; {}", r.pairs, r.skipped, r.note);
      break;
    }
    case MonitorKind::d_nonneg: {
      std::vector<double> values;
      for (double t : mon.taus) {
        const double one[] = {t};
        values.push_back(-verify_d_nonneg(geom, one, mon.slack).minimum);
      }
      out.series = make_series("d_nonneg_deficit", Abscissa::tau, mon.taus, std::move(values),
                               Property::bounded_above, mon.slack, 0.0);
      break;
    }
  }
  out.series.name = mon.name;
  out.completed = true;
  return out;
}

}  // namespace

std::string_view to_string(MonitorKind kind) {
  switch (kind) {
    case MonitorKind::theta: return "theta";
    case MonitorKind::w_entropy: return "w_entropy";
    case MonitorKind::min_lbar_gap: return "min_lbar_gap";
    case MonitorKind::reduced_volume: return "reduced_volume";
    case MonitorKind::convexity: return "convexity";
    case MonitorKind::prekopa_leindler: return "prekopa_leindler";
    case MonitorKind::scaling_identity: return "scaling_identity";
    case MonitorKind::transport_bound: return "transport_bound";
    case MonitorKind::d_nonneg: return "d_nonneg";
  }
  return "unknown";
}

std::vector<std::string_view> monitor_kinds() {
  return {"theta",      "w_entropy",        "min_lbar_gap",     "reduced_volume", "convexity",
          "prekopa_leindler", "scaling_identity", "transport_bound", "d_nonneg"};
}

MonitorKind monitor_kind_from_string(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(MonitorKind::d_nonneg); ++k) {
    const auto kind = static_cast<MonitorKind>(k);
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError(fmt::format("unknown monitor kind '{}'", name));
}

double evaluate_expression(std::string_view text) { return ExpressionParser(text).parse(); }

std::vector<PotentialField::CosineTerm> parse_potential(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  std::vector<PotentialField::CosineTerm> terms;
  if (s.empty() || s == "0") return terms;
  static const std::regex term(R"(([+-]?)([^+*]*?)\*?cos\((?:([^*()]+)\*?)?theta\))");
  std::size_t covered = 0;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), term); it != std::sregex_iterator();
       ++it) {
    const std::smatch& m = *it;
    if (static_cast<std::size_t>(m.position(0)) != covered) break;
    covered += static_cast<std::size_t>(m.length(0));
    PotentialField::CosineTerm t;
    const std::string amp = m[2].str();
    t.amplitude = amp.empty() ? 1.0 : evaluate_expression(amp);
    if (m[1].str() == "-") t.amplitude = -t.amplitude;
    t.frequency = m[3].matched ? evaluate_expression(m[3].str()) : 1.0;
    terms.push_back(t);
  }
  if (covered != s.size()) {
    throw ParseError(
        fmt::format("bad potential '{}': expected terms like 0.1*cos(2*theta)", text));
  }
  return terms;
}

const MeasureConfig& ExperimentConfig::measure(const std::string& name) const {
  for (const MeasureConfig& m : measures) {
    if (m.name == name) return m;
  }
  throw ConfigError(fmt::format("no measure named '{}'", name));
}

ExperimentConfig parse_config(std::string_view text, std::string source, std::string base_dir) {
  ptree root;
  {
    std::istringstream in{std::string(text)};
    try {
      boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ParseError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
    }
  }
  const LineIndex lines(text);
  ExperimentConfig cfg;
  cfg.source = source;
  cfg.text = std::string(text);

  // Root-level keys first, then sections in file order.
  std::vector<std::pair<std::string, const ptree*>> sections;
  ptree top;
  for (const auto& [key, child] : root) {
    if (lines.sections.count(key)) sections.emplace_back(key, &child);
    else top.push_back({key, child});
  }
  // The INI reader drops sections without keys; they still count.
  static const ptree empty;
  for (const auto& [name, line] : lines.sections) {
    if (root.find(name) == root.not_found()) sections.emplace_back(name, &empty);
  }
  {
    Section sec(cfg.source, lines, "", top);
    const auto seed = sec.number("seed");
    if (seed) {
      if (*seed < 0.0 || std::floor(*seed) != *seed) sec.fail("seed", "must be a nonnegative integer");
      cfg.seed = static_cast<std::uint64_t>(*seed);
    }
    sec.finish();
  }
  std::sort(sections.begin(), sections.end(), [&](const auto& a, const auto& b) {
    return lines.sections.at(a.first) < lines.sections.at(b.first);
  });

  auto find = [&](const std::string& name) -> const ptree* {
    for (const auto& [n, t] : sections) {
      if (n == name) return t;
    }
    return nullptr;
  };
  const ptree* geometry = find("geometry");
  if (!geometry) throw ParseError(fmt::format("{}: missing [geometry] section", source));
  {
    Section sec(cfg.source, lines, "geometry", *geometry);
    cfg.geometry = parse_geometry(sec, base_dir);
    sec.finish();
  }
  for (const auto& [name, tree] : sections) {
    if (name.rfind("measure.", 0) == 0) {
      Section sec(cfg.source, lines, name, *tree);
      const std::string id = name.substr(8);
      if (id.empty()) throw ParseError(fmt::format("{}:{}: empty measure name", source, lines.sections.at(name)));
      cfg.measures.push_back(parse_measure(sec, id, cfg.geometry));
      sec.finish();
    }
  }
  for (const auto& [name, tree] : sections) {
    if (name == "geometry" || name.rfind("measure.", 0) == 0) continue;
    if (name == "output") {
      Section sec(cfg.source, lines, name, *tree);
      cfg.output.directory = sec.text("directory", cfg.output.directory);
      cfg.output.plots = sec.flag("plots", cfg.output.plots);
      sec.finish();
    } else if (name.rfind("monitor.", 0) == 0) {
      Section sec(cfg.source, lines, name, *tree);
      const std::string id = name.substr(8);
      if (id.empty()) throw ParseError(fmt::format("{}:{}: empty monitor name", source, lines.sections.at(name)));
      cfg.monitors.push_back(parse_monitor(sec, id, cfg.geometry, cfg.measures));
      sec.finish();
    } else {
      throw ParseError(
          fmt::format("{}:{}: unknown section [{}]", source, lines.sections.at(name), name));
    }
  }
  return cfg;
}

ExperimentConfig validate_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("{}: cannot read config", path));
  std::ostringstream s;
  s << in.rdbuf();
  const std::filesystem::path p(path);
  const std::string dir = p.has_parent_path() ? p.parent_path().string() : std::string(".");
  return parse_config(s.str(), path, dir);
}

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options) {
  if (options.seed) config.seed = *options.seed;
  if (options.resolution) {
    const std::size_t n = *options.resolution;
    if (config.geometry.model.kind == FlowKind::custom_tabulated) {
      throw SemanticError("--resolution cannot change a tabulated flow's mesh");
    }
    if (n < 16) throw SemanticError(fmt::format("--resolution {}: needs at least 16 nodes", n));
    if (config.geometry.model.dimension() == 2 && n % 2 != 0) {
      throw SemanticError(fmt::format("--resolution {}: sphere meshes need even N", n));
    }
    config.geometry.nodes = n;
  }
  return config;
}

Geometry make_geometry(const GeometryConfig& config) {
  return build_geometry(config.model, config.nodes, config.domain);
}

bool RunReport::all_pass() const {
  if (!complete) return false;
  return std::all_of(monitors.begin(), monitors.end(),
                     [](const MonitorOutcome& m) { return m.completed && m.series.pass; });
}

RunReport run_experiment(const ExperimentConfig& input, const RunOptions& options) {
  const ExperimentConfig cfg = apply_overrides(input, options);
  RunReport report;
  report.version = std::string(tool_version());
  report.source = cfg.source;
  report.config_echo = cfg.text;
  report.seed = cfg.seed;
  report.nodes = cfg.geometry.nodes;

  CurveOptions co;
  co.samples = cfg.geometry.curve_samples;
  co.seed = cfg.seed;
  try {
    const Geometry geom = make_geometry(cfg.geometry);
    for (const MonitorConfig& mon : cfg.monitors) {
      const auto start = std::chrono::steady_clock::now();
      MonitorOutcome outcome;
      try {
        outcome = run_monitor(geom, cfg, mon, co);
      } catch (const Error& e) {
        outcome.name = mon.name;
        outcome.kind = mon.kind;
        outcome.series.name = mon.name;
        outcome.series.pass = false;
        outcome.error = e.what();
      }
      outcome.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const bool failed = !outcome.completed;
      report.monitors.push_back(std::move(outcome));
      if (failed) {
        report.error = fmt::format("monitor '{}' aborted: {}", mon.name, report.monitors.back().error);
        break;
      }
    }
    report.complete = report.error.empty();
  } catch (const Error& e) {
    report.error = e.what();
    report.complete = false;
  }

  if (options.write_files) {
    write_outputs(report, options.out_dir.value_or(cfg.output.directory), cfg.output.plots);
  }
  return report;
}

std::string format_report(const RunReport& r) {
  std::string s;
  s += fmt::format("levolve {}\n", r.version);
  s += fmt::format("config: {}\n", r.source);
  s += fmt::format("seed: {}\n", r.seed);
  s += fmt::format("nodes: {}\n", r.nodes);
  s += fmt::format("status: {}\n", r.complete ? "complete" : "incomplete");
  if (!r.error.empty()) s += fmt::format("error: {}\n", r.error);
  s += fmt::format("monitors: {}\n", r.monitors.size());
  for (const MonitorOutcome& m : r.monitors) {
    if (!m.completed) {
      s += fmt::format("  {:<24} {:<18} ABORTED  {}\n", m.name, to_string(m.kind), m.error);
      continue;
    }
    s += fmt::format("  {:<24} {:<18} {:<8} worst_violation={:.6e} slack={:.1e} time={:.2f}s\n",
                     m.name, to_string(m.kind), m.series.pass ? "PASS" : "FAIL",
                     m.series.worst_violation, m.series.slack, m.seconds);
    if (!m.series.note.empty()) s += fmt::format("    note: {}\n", m.series.note);
  }
  s += fmt::format("overall: {}\n", r.all_pass() ? "PASS" : "FAIL");
  return s;
}

nlohmann::json report_json(const RunReport& r) {
  nlohmann::json j;
  j["version"] = r.version;
  j["config"] = r.source;
  j["seed"] = r.seed;
  j["nodes"] = r.nodes;
  j["complete"] = r.complete;
  if (!r.error.empty()) j["error"] = r.error;
  j["monitors"] = nlohmann::json::array();
  for (const MonitorOutcome& m : r.monitors) {
    nlohmann::json e = m.completed ? series_summary(m.series) : nlohmann::json::object();
    e["name"] = m.name;
    e["kind"] = std::string(to_string(m.kind));
    e["seconds"] = m.seconds;
    if (!m.completed) {
      e["verdict"] = "aborted";
      e["error"] = m.error;
    }
    j["monitors"].push_back(e);
  }
  j["overall"] = r.all_pass() ? "pass" : "fail";
  j["config_echo"] = r.config_echo;
  return j;
}

void write_outputs(const RunReport& report, const std::string& directory, bool plots) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(fmt::format("cannot create {}: {}", directory, ec.message()));
  const fs::path dir(directory);
  for (const MonitorOutcome& m : report.monitors) {
    if (!m.completed) continue;
    write_text_file((dir / (m.name + ".csv")).string(),
                    csv_of([&](std::ostream& s) { write_series_csv(s, m.series); }));
    for (const Artifact& a : m.artifacts) write_text_file((dir / a.filename).string(), a.contents);
    if (plots) {
      write_text_file((dir / ("plot_" + m.name + ".svg")).string(),
                      csv_of([&](std::ostream& s) { write_series_svg(s, m.series); }));
    }
  }
  write_text_file((dir / "report.txt").string(), format_report(report));
  write_text_file((dir / "summary.json").string(), report_json(report).dump(2) + "\n");
}

int exit_code(const RunReport& report) {
  if (!report.complete) return 3;
  return report.all_pass() ? 0 : 1;
}

}  // namespace levolve
