#include "rted/case_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace rted {

// ---------------------------------------------------------------------------
// Random numbers

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform(double lo, double hi) {
  // 53 random bits; independent of the standard library's distributions.
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

// ---------------------------------------------------------------------------
// MATPOWER parsing

namespace {

struct Matrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;
  int first_line = 0;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(std::string_view tok, int line) {
  double v = 0.0;
  if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
  if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("malformed matrix entry '" + std::string(tok) + "'", line);
  return v;
}

std::vector<double> parse_row(std::string_view row, int line) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < row.size()) {
    while (i < row.size() && (row[i] == ' ' || row[i] == '\t' || row[i] == ',' || row[i] == '\r'))
      ++i;
    if (i >= row.size()) break;
    std::size_t j = i;
    while (j < row.size() && row[j] != ' ' && row[j] != '\t' && row[j] != ',' && row[j] != '\r')
      ++j;
    out.push_back(parse_number(row.substr(i, j - i), line));
    i = j;
  }
  return out;
}

struct RawCase {
  double base_mva = 100.0;
  std::map<std::string, Matrix> matrices;
};

RawCase scan_case(std::string_view text) {
  RawCase raw;
  std::string current;  // name of the matrix being read, empty if none
  bool in_cell = false;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (auto c = line.find('%'); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (in_cell) {
      if (line.find('}') != std::string_view::npos) in_cell = false;
      continue;
    }
    if (current.empty()) {
      if (line.rfind("mpc.", 0) != 0) continue;  // function header, etc.
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected assignment", lineno);
      const std::string name(trim(line.substr(4, eq - 4)));
      std::string_view rhs = trim(line.substr(eq + 1));
      if (!rhs.empty() && rhs.front() == '{') {
        spdlog::warn("ignoring unsupported field mpc.{}", name);
        if (rhs.find('}') == std::string_view::npos) in_cell = true;
        continue;
      }
      if (!rhs.empty() && rhs.front() == '[') {
        current = name;
        auto& m = raw.matrices[name];
        m.first_line = lineno;
        line = trim(rhs.substr(1));
      } else {
        if (name == "baseMVA") {
          if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
          raw.base_mva = parse_number(trim(rhs), lineno);
        } else if (name != "version") {
          spdlog::warn("ignoring unsupported field mpc.{}", name);
        }
        continue;
      }
    }
    // Inside a matrix: rows split by ';' or end of line, terminated by ']'.
    bool closed = false;
    if (auto b = line.find(']'); b != std::string_view::npos) {
      line = line.substr(0, b);
      closed = true;
    }
    std::size_t start = 0;
    while (start <= line.size()) {
      auto semi = line.find(';', start);
      if (semi == std::string_view::npos) semi = line.size();
      auto row_text = trim(line.substr(start, semi - start));
      if (!row_text.empty()) {
        auto& m = raw.matrices[current];
        m.rows.push_back(parse_row(row_text, lineno));
        m.row_lines.push_back(lineno);
      }
      start = semi + 1;
    }
    if (closed) current.clear();
    if (nl == text.size()) break;
  }
  if (!current.empty()) throw ParseError("unterminated matrix mpc." + current, lineno);
  return raw;
}

const Matrix& require_matrix(const RawCase& raw, const std::string& name, std::size_t min_cols) {
  auto it = raw.matrices.find(name);
  if (it == raw.matrices.end()) throw ParseError("missing matrix mpc." + name, 0);
  const auto& m = it->second;
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    if (m.rows[r].size() < min_cols)
      throw ParseError("mpc." + name + " row has " + std::to_string(m.rows[r].size()) +
                           " columns, expected at least " + std::to_string(min_cols),
                       m.row_lines[r]);
    if (m.rows[r].size() != m.rows[0].size())
      throw ParseError("mpc." + name + " row has inconsistent column count", m.row_lines[r]);
  }
  return m;
}

// Samples a cost function at the given breakpoints and merges equal slopes.
template <class F>
BidCurve sample_curve(F&& f, std::vector<double> breaks, int line) {
  std::vector<BidSegment> segs;
  if (breaks.size() < 2 || breaks.back() - breaks.front() < 1e-12) {
    const double p = breaks.front();
    const double h = 1e-6 * std::max(1.0, std::abs(p));
    const double k = (f(p + h) - f(p)) / h;
    segs.push_back({k, f(p) - k * p, p, breaks.back()});
    return BidCurve(std::move(segs));
  }
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = breaks[s], hi = breaks[s + 1];
    if (hi - lo < 1e-12) continue;
    const double k = (f(hi) - f(lo)) / (hi - lo);
    if (!segs.empty()) {
      const double prev = segs.back().kappa;
      if (std::abs(k - prev) <= 1e-10 * std::max(1.0, std::abs(prev))) {
        segs.back().q_hi = hi;
        continue;
      }
      if (k < prev) throw ParseError("non-convex generator cost", line);
    }
    segs.push_back({k, f(lo) - k * lo, lo, hi});
  }
  return BidCurve(std::move(segs));
}

BidCurve gencost_curve(const std::vector<double>& row, double p_min, double p_max,
                       int segments, int line) {
  const int model = static_cast<int>(row[0]);
  const int n = static_cast<int>(row[3]);
  if (row.size() < 4 + static_cast<std::size_t>(model == 1 ? 2 * n : n))
    throw ParseError("gencost row too short for its declared size", line);
  if (model == 2) {
    std::vector<double> coef(row.begin() + 4, row.begin() + 4 + n);
    auto f = [&](double p) {
      double v = 0.0;
      for (double c : coef) v = v * p + c;
      return v;
    };
    std::vector<double> breaks;
    for (int s = 0; s <= segments; ++s)
      breaks.push_back(s == segments ? p_max : p_min + (p_max - p_min) * s / segments);
    return sample_curve(f, breaks, line);
  }
  if (model == 1) {
    std::vector<double> px, fx;
    for (int k = 0; k < n; ++k) {
      px.push_back(row[4 + 2 * k]);
      fx.push_back(row[5 + 2 * k]);
    }
    if (n < 2) throw ParseError("piecewise gencost needs two points", line);
    auto f = [&](double p) {
      std::size_t k = 0;
      while (k + 2 < px.size() && p > px[k + 1]) ++k;
      const double slope = (fx[k + 1] - fx[k]) / (px[k + 1] - px[k]);
      return fx[k] + slope * (p - px[k]);
    };
    std::vector<double> breaks{p_min};
    for (double p : px)
      if (p > p_min + 1e-12 && p < p_max - 1e-12) breaks.push_back(p);
    breaks.push_back(p_max);
    return sample_curve(f, breaks, line);
  }
  throw ParseError("unsupported gencost model " + std::to_string(model), line);
}

}  // namespace

SystemCase parse_case(std::string_view text, const CaseParseOptions& options) {
  const RawCase raw = scan_case(text);
  SystemCase sc;
  sc.base_mva = raw.base_mva;

  const auto& bus = require_matrix(raw, "bus", 3);
  std::map<int, double> pd_by_bus;
  int references = 0;
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    const int type = static_cast<int>(row[1]);
    if (type == 4) {
      spdlog::warn("dropping isolated bus {}", static_cast<int>(row[0]));
      continue;
    }
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.is_reference = (type == 3);
    references += b.is_reference ? 1 : 0;
    if (references > 1) throw ValidationError("multiple reference buses");
    sc.buses.push_back(b);
    if (row[2] != 0.0) pd_by_bus[b.id] += row[2];
  }
  sc.index_buses();
  for (const auto& [id, pd] : pd_by_bus) sc.loads.push_back({id, pd});

  const auto& branch = require_matrix(raw, "branch", 6);
  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    if (row.size() > 10 && row[10] == 0.0) continue;
    Line l;
    l.id = static_cast<int>(r + 1);
    l.from_bus = static_cast<int>(row[0]);
    l.to_bus = static_cast<int>(row[1]);
    l.reactance_pu = row[3];
    l.susceptance_pu = row[4];
    if (!(l.reactance_pu > 0.0))
      throw ValidationError("line " + std::to_string(l.id) + " has zero or negative reactance");
    if (row[5] > 0.0) {
      l.flow_max = row[5];
      l.flow_min = -row[5];
    }
    sc.lines.push_back(l);
  }

  const auto& gen = require_matrix(raw, "gen", 10);
  const Matrix* gencost = nullptr;
  if (auto it = raw.matrices.find("gencost"); it != raw.matrices.end()) {
    gencost = &it->second;
    if (gencost->rows.size() > gen.rows.size())
      spdlog::warn("ignoring {} reactive gencost rows", gencost->rows.size() - gen.rows.size());
  }
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    if (row[7] <= 0.0) continue;
    Generator g;
    g.id = static_cast<int>(r + 1);
    g.bus_id = static_cast<int>(row[0]);
    const double p_max = row[8];
    const double p_min = row[9];
    g.p_min_t = TimeSeries(p_min);
    g.p_max_t = TimeSeries(p_max);
    g.p_prev = row[1];
    const double ramp10 = row.size() > 18 ? row[18] : 0.0;
    const double ramp = ramp10 > 0.0 ? ramp10 * options.interval_minutes / 10.0
                                     : options.default_ramp_fraction * std::max(p_max, 0.0);
    g.ramp_up = ramp;
    g.ramp_down = ramp;
    if (gencost && r < gencost->rows.size()) {
      if (gencost->rows[r].size() < 4) throw ParseError("gencost row too short", gencost->row_lines[r]);
      g.bid_curve_t.set_constant(gencost_curve(gencost->rows[r], p_min, p_max,
                                               options.cost_segments, gencost->row_lines[r]));
    } else {
      g.bid_curve_t.set_constant(BidCurve({{0.0, 0.0, p_min, p_max}}));
    }
    sc.generators.push_back(std::move(g));
  }
  sc.validate();
  return sc;
}

SystemCase load_case_file(const std::string& path, const CaseParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str(), options);
}

std::string serialize_case(const SystemCase& sc, double interval_minutes) {
  std::ostringstream out;
  out.precision(17);
  out << "function mpc = serialized_case\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << sc.base_mva << ";\n\n";
  std::vector<double> pd(sc.buses.size(), 0.0);
  for (const auto& l : sc.loads) pd[sc.bus_index(l.bus_id)] += l.base_mw;
  out << "%% bus data\nmpc.bus = [\n";
  for (std::size_t i = 0; i < sc.buses.size(); ++i) {
    const auto& b = sc.buses[i];
    out << "\t" << b.id << "\t" << (b.is_reference ? 3 : 1) << "\t" << pd[i]
        << "\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;\n";
  }
  out << "];\n\n%% generator data\nmpc.gen = [\n";
  for (const auto& g : sc.generators) {
    const double ramp10 = std::isfinite(g.ramp_up) ? g.ramp_up * 10.0 / interval_minutes : 0.0;
    out << "\t" << g.bus_id << "\t" << g.p_prev << "\t0\t0\t0\t1\t" << sc.base_mva << "\t1\t"
        << g.p_max_t.at(0) << "\t" << g.p_min_t.at(0) << "\t0\t0\t0\t0\t0\t0\t0\t0\t" << ramp10
        << "\t0\t0;\n";
  }
  out << "];\n\n%% branch data\nmpc.branch = [\n";
  for (const auto& l : sc.lines) {
    out << "\t" << l.from_bus << "\t" << l.to_bus << "\t0\t" << l.reactance_pu << "\t"
        << l.susceptance_pu << "\t" << (l.limited() ? l.flow_max : 0.0)
        << "\t0\t0\t0\t0\t1\t-360\t360;\n";
  }
  out << "];\n\n%% generator cost data\nmpc.gencost = [\n";
  for (const auto& g : sc.generators) {
    const BidCurve& c = g.bid_curve_t.at(0);
    const auto& segs = c.segments();
    out << "\t1\t0\t0\t" << segs.size() + 1;
    out << "\t" << segs.front().q_lo << "\t" << c.cost(segs.front().q_lo);
    for (const auto& s : segs) out << "\t" << s.q_hi << "\t" << s.kappa * s.q_hi + s.beta;
    out << ";\n";
  }
  out << "];\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// DERA and bid construction

SystemCase build_deras(SystemCase sc, const DeraOptions& options) {
  if (!(options.fraction > 0.0 && options.fraction <= 1.0))
    throw std::invalid_argument("DER fraction must be in (0, 1]");
  if (options.group_size < 1) throw std::invalid_argument("group size must be at least 1");

  std::map<int, double> load_by_bus;
  for (const auto& l : sc.loads) load_by_bus[l.bus_id] += l.base_mw;
  std::vector<std::pair<int, double>> sites;
  for (const auto& b : sc.buses) {
    auto it = load_by_bus.find(b.id);
    if (it == load_by_bus.end()) continue;
    if (it->second > 0.0 && it->second > options.threshold_mw) sites.emplace_back(b.id, it->second);
  }
  if (sites.empty()) throw ValidationError("no load buses qualify for T-DER placement");

  std::vector<TDer> tders;
  for (std::size_t k = 0; k < sites.size(); ++k) {
    TDer e;
    e.id = static_cast<int>(k + 1);
    e.bus_id = sites[k].first;
    e.p_min_t = TimeSeries(0.0);
    e.p_max_t = TimeSeries(options.fraction * sites[k].second);
    tders.push_back(std::move(e));
  }
  Rng rng(options.seed);
  rng.shuffle(tders);

  sc.deras.clear();
  const auto group = static_cast<std::size_t>(options.group_size);
  for (std::size_t start = 0; start < tders.size(); start += group) {
    Dera a;
    a.id = static_cast<int>(sc.deras.size() + 1);
    double lo = 0.0, hi = 0.0;
    for (std::size_t k = start; k < std::min(tders.size(), start + group); ++k) {
      lo += tders[k].p_min_t.at(0);
      hi += tders[k].p_max_t.at(0);
      a.tders.push_back(tders[k]);
    }
    a.p_min_t = TimeSeries(lo);
    a.p_max_t = TimeSeries(hi);
    sc.deras.push_back(std::move(a));
  }
  return sc;
}

double load_level_factor(const LoadProfile& profile, std::size_t t, const BidOptions& options) {
  if (profile.horizon() == 0) return 1.0;
  double mean = 0.0;
  for (std::size_t k = 0; k < profile.horizon(); ++k) mean += profile.system_load(k);
  mean /= static_cast<double>(profile.horizon());
  if (!(mean > 0.0)) return 1.0;
  return std::clamp(profile.system_load(t) / mean, options.load_factor_min,
                    options.load_factor_max);
}

namespace {

// Matrix with row sums `cap` and column sums `seg_width`, proportional to
// `weight` (iterative proportional fitting). The last column absorbs the
// rounding so that each row sums exactly.
std::vector<std::vector<double>> split_segments(const std::vector<std::vector<double>>& weight,
                                                const std::vector<double>& cap,
                                                const std::vector<double>& seg_width) {
  const std::size_t ne = cap.size(), ns = seg_width.size();
  std::vector<std::vector<double>> x(ne, std::vector<double>(ns, 0.0));
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t s = 0; s < ns; ++s) x[e][s] = cap[e] > 0.0 ? weight[e][s] : 0.0;
  for (int it = 0; it < 500; ++it) {
    double err = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      double col = 0.0;
      for (std::size_t e = 0; e < ne; ++e) col += x[e][s];
      for (std::size_t e = 0; e < ne; ++e) x[e][s] = col > 0.0 ? x[e][s] * seg_width[s] / col : 0.0;
    }
    for (std::size_t e = 0; e < ne; ++e) {
      double row = 0.0;
      for (std::size_t s = 0; s < ns; ++s) row += x[e][s];
      err = std::max(err, std::abs(row - cap[e]));
      for (std::size_t s = 0; s < ns; ++s) x[e][s] = row > 0.0 ? x[e][s] * cap[e] / row : 0.0;
    }
    if (err <= 1e-13 * std::max(1.0, *std::max_element(cap.begin(), cap.end()))) break;
  }
  for (std::size_t e = 0; e < ne; ++e) {
    double head = 0.0;
    for (std::size_t s = 0; s + 1 < ns; ++s) head += x[e][s];
    x[e][ns - 1] = std::max(0.0, cap[e] - head);
  }
  return x;
}

}  // namespace

SystemCase generate_bids(SystemCase sc, const LoadProfile& profile, const BaseLmp& base_lmp,
                         const BidOptions& options) {
  const std::size_t horizon = std::max<std::size_t>(profile.horizon(), 1);
  if (base_lmp.cols() != static_cast<Eigen::Index>(sc.buses.size()) || base_lmp.rows() < 1)
    throw std::invalid_argument("base LMP must have one column per bus");
  if (!(base_lmp.array() > 0.0).all()) throw std::invalid_argument("base LMP must be positive");
  if (options.level_factors.empty()) throw std::invalid_argument("need at least one bid level");

  auto lmp = [&](std::size_t t, std::size_t bus) {
    const auto row = std::min<Eigen::Index>(static_cast<Eigen::Index>(t), base_lmp.rows() - 1);
    return base_lmp(row, static_cast<Eigen::Index>(bus));
  };
  std::vector<double> alpha_t(horizon, 1.0);
  double mean_load = 0.0;
  for (std::size_t t = 0; t < profile.horizon(); ++t) mean_load += profile.system_load(t);
  if (profile.horizon() > 0) mean_load /= static_cast<double>(profile.horizon());
  if (mean_load > 0.0)
    for (std::size_t t = 0; t < profile.horizon(); ++t)
      alpha_t[t] = std::clamp(profile.system_load(t) / mean_load, options.load_factor_min,
                              options.load_factor_max);

  Rng rng(options.seed);
  // Fixed per-(member, segment) weights, only drawn when mixing is requested.
  const std::size_t nseg = options.level_factors.size();
  std::vector<std::vector<std::vector<double>>> mix_weight(sc.deras.size());
  if (options.member_mix > 0.0) {
    if (options.member_mix >= 1.0) throw std::invalid_argument("member_mix must be below 1");
    for (std::size_t a = 0; a < sc.deras.size(); ++a)
      for (std::size_t e = 0; e < sc.deras[a].tders.size(); ++e) {
        std::vector<double> w(nseg);
        for (auto& x : w) x = 1.0 + options.member_mix * rng.uniform(-1.0, 1.0);
        mix_weight[a].push_back(std::move(w));
      }
  }

  std::vector<std::vector<BidCurve>> gen_curves(sc.generators.size());
  std::vector<std::vector<BidCurve>> dera_curves(sc.deras.size());
  std::vector<std::vector<std::vector<BidCurve>>> tder_curves(sc.deras.size());
  for (std::size_t a = 0; a < sc.deras.size(); ++a) tder_curves[a].resize(sc.deras[a].tders.size());

  std::vector<double> kappa(options.level_factors.size());
  auto fill_kappa = [&](double base) {
    const double alpha_r = rng.uniform(options.random_lo, options.random_hi);
    for (std::size_t s = 0; s < kappa.size(); ++s) kappa[s] = base * options.level_factors[s] * alpha_r;
  };
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t g = 0; g < sc.generators.size(); ++g) {
      const auto& gen = sc.generators[g];
      fill_kappa(lmp(t, sc.bus_index(gen.bus_id)) * alpha_t[t]);
      const double lo = gen.p_min_t.at(t), hi = gen.p_max_t.at(t);
      gen_curves[g].push_back(BidCurve::from_prices(kappa, lo, hi, kappa[0] * lo));
    }
    for (std::size_t a = 0; a < sc.deras.size(); ++a) {
      const auto& dera = sc.deras[a];
      double base = 0.0;
      for (const auto& e : dera.tders) base += lmp(t, sc.bus_index(e.bus_id));
      base /= static_cast<double>(dera.tders.size());
      fill_kappa(base * alpha_t[t]);
      const double lo = dera.p_min_t.at(t), hi = dera.p_max_t.at(t);
      BidCurve curve = BidCurve::from_prices(kappa, lo, hi, kappa[0] * lo);
      if (mix_weight[a].empty()) {
        for (std::size_t e = 0; e < dera.tders.size(); ++e) {
          const double share = hi > 0.0 ? dera.tders[e].p_max_t.at(t) / hi
                                        : 1.0 / static_cast<double>(dera.tders.size());
          tder_curves[a][e].push_back(curve.scaled(std::max(share, 1e-12)));
        }
      } else {
        std::vector<double> seg_width, cap;
        for (const auto& sg : curve.segments()) seg_width.push_back(sg.q_hi - sg.q_lo);
        for (const auto& m : dera.tders) cap.push_back(m.p_max_t.at(t) - m.p_min_t.at(t));
        const auto widths = split_segments(mix_weight[a], cap, seg_width);
        for (std::size_t e = 0; e < dera.tders.size(); ++e) {
          const double elo = dera.tders[e].p_min_t.at(t);
          tder_curves[a][e].push_back(BidCurve::from_widths(kappa, elo, widths[e], kappa[0] * elo));
        }
      }
      dera_curves[a].push_back(std::move(curve));
    }
  }
  for (std::size_t g = 0; g < sc.generators.size(); ++g)
    sc.generators[g].bid_curve_t.assign(std::move(gen_curves[g]));
  for (std::size_t a = 0; a < sc.deras.size(); ++a) {
    sc.deras[a].bid_curve_t.assign(std::move(dera_curves[a]));
    for (std::size_t e = 0; e < sc.deras[a].tders.size(); ++e)
      sc.deras[a].tders[e].cost_curve_t.assign(std::move(tder_curves[a][e]));
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Load profiles

LoadProfile load_profile(std::string_view csv, const SystemCase& sc, const ProfileOptions& options) {
  std::map<long, double> multiplier;
  std::map<int, std::map<long, double>> by_bus;
  std::set<long> intervals;
  int lineno = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    auto nl = csv.find('\n', pos);
    if (nl == std::string_view::npos) nl = csv.size();
    std::string_view line = trim(csv.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty()) continue;
    if (!header_seen) {
      if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line.remove_prefix(3);  // UTF-8 byte order mark
      if (line != "interval,bus_id,mw")
        throw ParseError("expected header 'interval,bus_id,mw'", lineno);
      header_seen = true;
      continue;
    }
    std::string_view fields[3];
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      auto comma = line.find(',', start);
      if (f < 2 && comma == std::string_view::npos) throw ParseError("expected 3 fields", lineno);
      if (f == 2 && comma != std::string_view::npos) throw ParseError("expected 3 fields", lineno);
      fields[f] = trim(line.substr(start, (f == 2 ? line.size() : comma) - start));
      start = comma + 1;
    }
    const long t = static_cast<long>(parse_number(fields[0], lineno));
    const double mw = parse_number(fields[2], lineno);
    if (!std::isfinite(mw)) throw ParseError("non-finite demand", lineno);
    if (mw < 0.0) throw ValidationError("negative demand at line " + std::to_string(lineno));
    intervals.insert(t);
    if (fields[1] == "*") {
      multiplier[t] = mw;
      continue;
    }
    const int bus = static_cast<int>(parse_number(fields[1], lineno));
    if (!sc.has_bus(bus))
      throw ValidationError("profile line " + std::to_string(lineno) + " references unknown bus " +
                            std::to_string(bus));
    by_bus[bus][t] = mw;
  }
  if (!header_seen) throw ParseError("empty load profile", lineno);

  LoadProfile p;
  p.interval_minutes = options.interval_minutes;
  if (intervals.empty()) return p;
  const long first = *intervals.begin();
  const long last = *intervals.rbegin();
  if (static_cast<std::size_t>(last - first + 1) != intervals.size())
    throw ValidationError("profile intervals are not contiguous");
  for (const auto& [bus, series] : by_bus)
    if (series.size() != intervals.size())
      throw ValidationError("bus " + std::to_string(bus) + " does not cover the profile horizon");

  const auto base = base_nodal_demand(sc);
  p.demand.assign(intervals.size(), std::vector<double>(sc.buses.size(), 0.0));
  for (long t = first; t <= last; ++t) {
    auto& row = p.demand[static_cast<std::size_t>(t - first)];
    const double m = multiplier.count(t) ? multiplier.at(t) : 1.0;
    for (std::size_t i = 0; i < sc.buses.size(); ++i) {
      auto it = by_bus.find(sc.buses[i].id);
      row[i] = it != by_bus.end() ? it->second.at(t) : base[i] * m;
    }
  }
  return p;
}

LoadProfile load_profile_file(const std::string& path, const SystemCase& sc,
                              const ProfileOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_profile(ss.str(), sc, options);
}

std::vector<double> synthetic_load_curve(int days, double interval_minutes, std::uint64_t seed) {
  const int per_day = static_cast<int>(std::lround(24.0 * 60.0 / interval_minutes));
  const std::size_t n = static_cast<std::size_t>(std::max(days, 0) * per_day);
  std::vector<double> curve(n);
  Rng rng(seed);
  double noise = 0.0;
  auto bump = [](double h, double c, double w) { return std::exp(-((h - c) / w) * ((h - c) / w)); };
  for (std::size_t k = 0; k < n; ++k) {
    const int day = static_cast<int>(k) / per_day;
    const double h = (static_cast<double>(k % per_day) + 0.5) * interval_minutes / 60.0;
    const double weekend = (day % 7 == 5 || day % 7 == 6) ? 0.92 : 1.0;
    const double shape = 0.78 + 0.16 * bump(h, 9.5, 2.6) + 0.24 * bump(h, 19.0, 2.8) -
                         0.12 * bump(h, 3.5, 3.0) + 0.10 * bump(h, 27.5, 3.0);
    noise = 0.9 * noise + rng.uniform(-0.006, 0.006);
    curve[k] = weekend * shape * (1.0 + noise);
  }
  if (n > 0) {
    const double mean = std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(n);
    for (auto& v : curve) v /= mean;
  }
  return curve;
}

LoadProfile profile_from_curve(const SystemCase& sc, const std::vector<double>& curve,
                               double interval_minutes) {
  LoadProfile p;
  p.interval_minutes = interval_minutes;
  const auto base = base_nodal_demand(sc);
  p.demand.reserve(curve.size());
  for (double m : curve) {
    std::vector<double> row(base);
    for (auto& v : row) v *= m;
    p.demand.push_back(std::move(row));
  }
  return p;
}

std::string curve_to_csv(const std::vector<double>& curve) {
  std::ostringstream out;
  out.precision(10);
  out << "interval,bus_id,mw\n";
  for (std::size_t t = 0; t < curve.size(); ++t) out << t << ",*," << curve[t] << "\n";
  return out.str();
}

}  // namespace rted
