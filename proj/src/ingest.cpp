#include "rem/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rem/errors.hpp"

namespace rem {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// RFC 4180-style: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      out.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += ch;
    }
  }
  out.push_back(was_quoted ? cur : trim(cur));
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InputError(path + ": missing column '" + std::string(name) + "'");
}

std::string CsvTable::where(std::size_t row) const { return path + ":" + std::to_string(row + 2); }

CsvTable read_csv(const fs::path& path, std::initializer_list<std::string_view> required) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  CsvTable t;
  t.path = path.string();
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (!have_header) {
      if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError(t.path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw InputError(t.path + ": empty file");
  for (auto name : required) (void)t.column(name);
  return t;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  auto put = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << quote(r[i]);
    out << '\n';
  };
  put(header);
  for (const auto& r : rows) put(r);
  if (!out) throw InputError("failed writing " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError(t.where(row) + ": column '" + t.header[col] + "' is not a number: '" + s + "'");
  }
  return v;
}

int parse_year(const CsvTable& t, std::size_t row, std::size_t col) {
  const double v = parse_double(t, row, col);
  if (v != std::floor(v) || std::abs(v) > 1e6) {
    throw InputError(t.where(row) + ": year must be an integer, found '" + t.rows[row][col] + "'");
  }
  return static_cast<int>(v);
}

// ---- regions ---------------------------------------------------------------

void RegionResolver::add_alias(const std::string& alias, const std::string& canonical) {
  const auto idx = regions_.find(canonical);
  if (idx < 0) throw InputError("alias '" + alias + "' points to unknown region '" + canonical + "'");
  aliases_[alias] = idx;
}

std::int32_t RegionResolver::find(std::string_view name) const {
  const auto i = regions_.find(name);
  if (i >= 0) return i;
  auto it = aliases_.find(std::string(name));
  return it == aliases_.end() ? -1 : it->second;
}

RegionId RegionResolver::require(const CsvTable& t, std::size_t row, std::size_t col) const {
  const auto i = find(t.rows[row][col]);
  if (i < 0) throw InputError(t.where(row) + ": unknown region '" + t.rows[row][col] + "'");
  return RegionId{i};
}

RegionResolver load_regions(const fs::path& distance_csv, const std::optional<fs::path>& aliases_csv) {
  const auto t = read_csv(distance_csv, {"region_a", "region_b", "km"});
  const auto a = t.column("region_a"), b = t.column("region_b");
  std::set<std::string> names;
  for (const auto& r : t.rows) {
    names.insert(r[a]);
    names.insert(r[b]);
  }
  RegionResolver res(NodeIndex(std::vector<std::string>(names.begin(), names.end())));
  if (aliases_csv) {
    const auto at = read_csv(*aliases_csv, {"alias", "region_id"});
    const auto ca = at.column("alias"), cr = at.column("region_id");
    for (std::size_t i = 0; i < at.rows.size(); ++i) {
      if (!res.regions().contains(at.rows[i][cr]))
        throw InputError(at.where(i) + ": alias target '" + at.rows[i][cr] + "' is not a known region");
      res.add_alias(at.rows[i][ca], at.rows[i][cr]);
    }
  }
  return res;
}

std::vector<FirstRecord> load_first_records(const fs::path& path, const RegionResolver& regions,
                                            std::string_view taxon) {
  const auto t = read_csv(path, {"species_id", "taxon", "region_id", "year"});
  const auto cs = t.column("species_id"), ct = t.column("taxon"), cr = t.column("region_id"), cy = t.column("year");
  const bool all = taxon.empty() || taxon == "all";
  std::vector<FirstRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (!all && t.rows[i][ct] != taxon) continue;
    const RegionId c = regions.require(t, i, cr);
    out.push_back({t.rows[i][cs], regions.regions().name(c.value), parse_double(t, i, cy)});
  }
  return out;
}

std::vector<NativeRange> load_natives(const fs::path& path, const RegionResolver& regions,
                                      std::span<const FirstRecord> species) {
  const auto t = read_csv(path, {"species_id", "region_id"});
  const auto cs = t.column("species_id"), cr = t.column("region_id");
  std::set<std::string> keep;
  for (const auto& r : species) keep.insert(r.species);
  std::vector<NativeRange> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (!species.empty() && !keep.count(t.rows[i][cs])) continue;
    const RegionId c = regions.require(t, i, cr);
    out.push_back({t.rows[i][cs], regions.regions().name(c.value)});
  }
  return out;
}

// ---- imputation ------------------------------------------------------------

std::vector<double> extrapolate_trade(std::span<const std::optional<double>> series, int first_year,
                                      std::string* warning) {
  std::vector<double> out(series.size(), 0.0);
  std::size_t first_obs = series.size(), n_obs = 0;
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!series[i]) continue;
    if (*series[i] < 0.0 || !std::isfinite(*series[i]))
      throw InputError("trade value must be finite and non-negative in year " + std::to_string(first_year + static_cast<int>(i)));
    if (first_obs == series.size()) first_obs = i;
    ++n_obs;
    const double t = first_year + static_cast<double>(i);
    const double y = std::log1p(*series[i]);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    out[i] = *series[i];
  }
  if (n_obs == 0) throw InputError("trade series has no observed values");

  // Centered least squares: log(v + 1) = alpha + beta * t.
  const double n = static_cast<double>(n_obs);
  const double tbar = st / n, ybar = sy / n;
  const double sxx = stt - n * tbar * tbar;
  double slope = 0.0;
  if (n_obs == 1) {
    if (warning) *warning = "single observed trade value; filled as constant";
  } else if (sxx > 0.0) {
    slope = (sty - n * tbar * ybar) / sxx;
  }
  const bool zero_start = *series[first_obs] == 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i]) continue;
    if (zero_start && i < first_obs) continue;  // stays 0
    const double t = first_year + static_cast<double>(i);
    out[i] = std::max(0.0, std::expm1(ybar + slope * (t - tbar)));
  }
  return out;
}

std::vector<double> interpolate_decadal(std::span<const std::pair<int, double>> anchors, int first_year,
                                        int last_year) {
  if (anchors.empty()) throw InputError("no anchor values to interpolate");
  std::vector<std::pair<int, double>> a(anchors.begin(), anchors.end());
  std::sort(a.begin(), a.end());
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i].first == a[i - 1].first) throw InputError("duplicate anchor year " + std::to_string(a[i].first));

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(0, last_year - first_year + 1)));
  std::size_t k = 0;
  for (int y = first_year; y <= last_year; ++y) {
    double v;
    if (y <= a.front().first) {
      v = a.front().second;
    } else if (y >= a.back().first) {
      v = a.back().second;
    } else {
      while (a[k + 1].first < y) ++k;
      const auto& [y0, v0] = a[k];
      const auto& [y1, v1] = a[k + 1];
      const double f = static_cast<double>(y - y0) / static_cast<double>(y1 - y0);
      v = v0 + f * (v1 - v0);
    }
    out.push_back(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::vector<double> compute_sampling_effort(std::span<const FirstRecord> records, std::span<const NativeRange> natives,
                                            const NodeIndex& regions, double cutoff) {
  std::vector<std::set<std::string>> seen(regions.size());
  auto add = [&](const std::string& region, const std::string& species) {
    const auto c = regions.find(region);
    if (c < 0) throw InputError("unknown region '" + region + "' in sampling-effort input");
    seen[static_cast<std::size_t>(c)].insert(species);
  };
  for (const auto& n : natives) add(n.region, n.species);
  for (const auto& r : records)
    if (r.year <= cutoff) add(r.region, r.species);
  std::vector<double> out;
  out.reserve(seen.size());
  for (const auto& s : seen) out.push_back(static_cast<double>(s.size()));
  return out;
}

// ---- panels ----------------------------------------------------------------

namespace {

Eigen::MatrixXd load_distance(const fs::path& path, const RegionResolver& regions) {
  const auto t = read_csv(path, {"region_a", "region_b", "km"});
  const auto ca = t.column("region_a"), cb = t.column("region_b"), ck = t.column("km");
  const auto n = static_cast<Eigen::Index>(regions.regions().size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  d.diagonal().setZero();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto a = regions.require(t, i, ca).value, b = regions.require(t, i, cb).value;
    const double km = parse_double(t, i, ck);
    if (!(km >= 0.0) || !std::isfinite(km)) throw InputError(t.where(i) + ": distance must be finite and >= 0");
    if (a == b && km != 0.0) throw InputError(t.where(i) + ": self-distance must be 0");
    for (auto [u, v] : {std::pair{a, b}, std::pair{b, a}}) {
      if (!std::isnan(d(u, v)) && d(u, v) != km)
        throw InputError(t.where(i) + ": conflicting distances for " + t.rows[i][ca] + " / " + t.rows[i][cb]);
      d(u, v) = km;
    }
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (std::isnan(d(a, b)))
        throw InputError(path.string() + ": no distance between " + regions.regions().name(static_cast<int>(a)) +
                         " and " + regions.regions().name(static_cast<int>(b)));
  return d;
}

std::vector<Eigen::MatrixXd> load_trade(const fs::path& path, const RegionResolver& regions, int y0, int y1,
                                        PanelCoverage& cov, std::vector<std::string>& warnings) {
  const auto t = read_csv(path, {"importer", "exporter", "year", "usd"});
  const auto ci = t.column("importer"), ce = t.column("exporter"), cy = t.column("year"), cu = t.column("usd");
  const auto n = regions.regions().size();
  std::map<std::pair<int, int>, std::map<int, double>> series;
  int lo = y0, hi = y1;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto a = regions.require(t, i, ci).value, b = regions.require(t, i, ce).value;
    const int y = parse_year(t, i, cy);
    const double v = parse_double(t, i, cu);
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(t.where(i) + ": trade value must be finite and >= 0");
    if (!series[{a, b}].emplace(y, v).second) throw InputError(t.where(i) + ": duplicate trade row");
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  std::vector<Eigen::MatrixXd> imports(static_cast<std::size_t>(y1 - y0 + 1),
                                       Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  cov.panel = "trade";
  cov.cells = n * (n - 1) * imports.size();
  for (const auto& [key, obs] : series) {
    std::vector<std::optional<double>> s(static_cast<std::size_t>(hi - lo + 1));
    for (const auto& [y, v] : obs) s[static_cast<std::size_t>(y - lo)] = v;
    std::string warn;
    const auto filled = extrapolate_trade(s, lo, &warn);
    if (!warn.empty())
      warnings.push_back("trade " + regions.regions().name(key.first) + "<-" + regions.regions().name(key.second) +
                         ": " + warn);
    for (int y = y0; y <= y1; ++y) {
      const auto k = static_cast<std::size_t>(y - lo);
      imports[static_cast<std::size_t>(y - y0)](key.first, key.second) = filled[k];
      if (!s[k]) ++cov.imputed;
    }
  }
  const std::size_t dyads = n * (n - 1);
  std::size_t observed = 0;
  for (const auto& [key, obs] : series)
    if (key.first != key.second) ++observed;
  if (observed < dyads)
    warnings.push_back(std::to_string(dyads - observed) + " ordered region pairs have no trade rows; treated as 0");
  return imports;
}

Eigen::MatrixXd load_temperature(const fs::path& path, const RegionResolver& regions, int y0, int y1,
                                 PanelCoverage& cov) {
  const auto t = read_csv(path, {"region_id", "year", "celsius"});
  const auto cr = t.column("region_id"), cy = t.column("year"), cc = t.column("celsius");
  const auto n = static_cast<Eigen::Index>(regions.regions().size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, y1 - y0 + 1, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto c = regions.require(t, i, cr).value;
    const int y = parse_year(t, i, cy);
    if (y < y0 || y > y1) continue;
    const double v = parse_double(t, i, cc);
    if (!std::isfinite(v)) throw InputError(t.where(i) + ": temperature must be finite");
    m(c, y - y0) = v;
  }
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index y = 0; y < m.cols(); ++y)
      if (std::isnan(m(c, y)))
        throw InputError("panel 'temperature' has no value for " + regions.regions().name(static_cast<int>(c)) +
                         " in " + std::to_string(y0 + y));
  cov.panel = "temperature";
  cov.cells = static_cast<std::size_t>(m.size());
  return m;
}

void load_landcover(const fs::path& path, const RegionResolver& regions, int y0, int y1, CovariatePanels& p,
                    std::vector<PanelCoverage>& cov) {
  const auto t = read_csv(path, {"region_id", "year", "cropland", "pasture", "urban"});
  const auto cr = t.column("region_id"), cy = t.column("year");
  const std::size_t cols[3] = {t.column("cropland"), t.column("pasture"), t.column("urban")};
  const char* names[3] = {"cropland", "pasture", "urban"};
  const auto n = regions.regions().size();
  std::vector<std::vector<std::pair<int, double>>> anchors[3];
  for (auto& a : anchors) a.resize(n);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto c = static_cast<std::size_t>(regions.require(t, i, cr).value);
    const int y = parse_year(t, i, cy);
    for (int k = 0; k < 3; ++k) {
      const double v = parse_double(t, i, cols[k]);
      if (!(v >= 0.0 && v <= 1.0)) throw InputError(t.where(i) + ": " + names[k] + " must be a proportion in [0, 1]");
      anchors[k][c].emplace_back(y, v);
    }
  }
  Eigen::MatrixXd* out[3] = {&p.cropland, &p.pasture, &p.urban};
  for (int k = 0; k < 3; ++k) {
    PanelCoverage pc{names[k], 0, 0};
    out[k]->resize(static_cast<Eigen::Index>(n), y1 - y0 + 1);
    for (std::size_t c = 0; c < n; ++c) {
      if (anchors[k][c].empty())
        throw InputError("panel '" + std::string(names[k]) + "' has no rows for " +
                         regions.regions().name(static_cast<int>(c)));
      std::set<int> at;
      for (const auto& [y, v] : anchors[k][c]) at.insert(y);
      const auto series = interpolate_decadal(anchors[k][c], y0, y1);
      for (int y = y0; y <= y1; ++y) {
        (*out[k])(static_cast<Eigen::Index>(c), y - y0) = series[static_cast<std::size_t>(y - y0)];
        ++pc.cells;
        if (!at.count(y)) ++pc.imputed;
      }
    }
    cov.push_back(pc);
  }
}

void load_empires(const fs::path& path, const RegionResolver& regions, CovariatePanels& p) {
  const auto t = read_csv(path, {"region_id", "empire"});
  const auto cr = t.column("region_id"), ce = t.column("empire");
  p.empire.assign(regions.regions().size(), -1);
  NodeIndex empires;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto c = static_cast<std::size_t>(regions.require(t, i, cr).value);
    const auto& e = t.rows[i][ce];
    if (e.empty() || e == "independent") continue;
    p.empire[c] = empires.intern(e);
  }
  p.empire_names = empires.names();
}

}  // namespace

CovariatePanels load_panels(const PanelPaths& paths, const RegionResolver& regions, int first_year, int last_year,
                            std::span<const FirstRecord> records, std::span<const NativeRange> natives,
                            CoverageReport* report) {
  if (last_year < first_year) throw InputError("panel year range is empty");
  CovariatePanels p;
  p.regions = regions.regions();
  p.first_year = first_year;
  p.last_year = last_year;
  CoverageReport rep;

  p.distance_km = load_distance(paths.distance, regions);
  const auto n = p.regions.size();
  rep.panels.push_back({"distance", n * n, 0});
  if (paths.trade) {
    PanelCoverage pc;
    p.imports = load_trade(*paths.trade, regions, first_year, last_year, pc, rep.warnings);
    rep.panels.push_back(pc);
  }
  if (paths.temperature) {
    PanelCoverage pc;
    p.temperature = load_temperature(*paths.temperature, regions, first_year, last_year, pc);
    rep.panels.push_back(pc);
  }
  if (paths.landcover) load_landcover(*paths.landcover, regions, first_year, last_year, p, rep.panels);
  if (paths.empires) {
    load_empires(*paths.empires, regions, p);
    rep.panels.push_back({"empires", n, 0});
  }
  p.sampling_effort = compute_sampling_effort(records, natives, p.regions);
  rep.panels.push_back({"sampling_effort", n, 0});
  if (report) *report = std::move(rep);
  return p;
}

void write_panels(const fs::path& dir, const CovariatePanels& p) {
  const auto& names = p.regions.names();
  const auto n = names.size();
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a; b < n; ++b)
        rows.push_back({names[a], names[b],
                        format_double(p.distance_km(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)))});
    write_csv(dir / "distance.csv", {"region_a", "region_b", "km"}, rows);
  }
  if (p.has_trade()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b) continue;
        bool any = false;
        for (const auto& m : p.imports) any = any || m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) != 0.0;
        if (!any) continue;
        for (std::size_t y = 0; y < p.imports.size(); ++y)
          rows.push_back({names[a], names[b], std::to_string(p.first_year + static_cast<int>(y)),
                          format_double(p.imports[y](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)))});
      }
    write_csv(dir / "trade.csv", {"importer", "exporter", "year", "usd"}, rows);
  }
  if (p.has_temperature()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < n; ++c)
      for (int y = 0; y < p.year_count(); ++y)
        rows.push_back({names[c], std::to_string(p.first_year + y),
                        format_double(p.temperature(static_cast<Eigen::Index>(c), y))});
    write_csv(dir / "temperature.csv", {"region_id", "year", "celsius"}, rows);
  }
  if (p.has_landcover()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < n; ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      for (int y = 0; y < p.year_count(); ++y)
        rows.push_back({names[c], std::to_string(p.first_year + y), format_double(p.cropland(cc, y)),
                        format_double(p.pasture(cc, y)), format_double(p.urban(cc, y))});
    }
    write_csv(dir / "landcover.csv", {"region_id", "year", "cropland", "pasture", "urban"}, rows);
  }
  if (p.has_empires()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < n; ++c)
      rows.push_back({names[c], p.empire[c] < 0 ? "independent" : p.empire_names[static_cast<std::size_t>(p.empire[c])]});
    write_csv(dir / "empires.csv", {"region_id", "empire"}, rows);
  }
}

void write_first_records(const fs::path& path, std::span<const FirstRecord> records, std::string_view taxon) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back({r.species, std::string(taxon), r.region, format_double(r.year)});
  write_csv(path, {"species_id", "taxon", "region_id", "year"}, rows);
}

void write_natives(const fs::path& path, std::span<const NativeRange> natives) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(natives.size());
  for (const auto& r : natives) rows.push_back({r.species, r.region});
  write_csv(path, {"species_id", "region_id"}, rows);
}

void write_coverage_report(const fs::path& path, const CoverageReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : report.panels)
    rows.push_back({p.panel, std::to_string(p.cells), std::to_string(p.imputed), format_double(p.percent_imputed())});
  write_csv(path, {"panel", "cells", "imputed", "percent_imputed"}, rows);
}

}  // namespace rem
