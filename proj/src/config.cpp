#include "rem/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rem/errors.hpp"
#include "rem/ingest.hpp"

namespace rem {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) {
    // commas are optional separators
    std::string cur;
    for (char ch : w) {
      if (ch == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_number(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("config key '" + key + "': '" + s + "' is not a number");
}

std::vector<double> numbers(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& w : words(s)) out.push_back(to_number(key, w));
  return out;
}

std::uint64_t to_count(const std::string& key, const std::string& s) {
  const double v = to_number(key, s);
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::uint64_t>(v)))
    throw InputError("config key '" + key + "' needs a non-negative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw InputError("config key '" + key + "' needs true/false, got '" + s + "'");
}

Window to_window(const std::string& key, const std::string& s) {
  const auto v = numbers(key, s);
  if (v.size() != 2 || !(v[1] > v[0])) throw InputError("config key '" + key + "' needs 'begin end' with begin < end");
  return {v[0], v[1]};
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + format_double(x);
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError("config: " + std::string(e.what()));
  }
  RunConfig c;
  auto path = [&](const std::string& v) { return fs::weakly_canonical(base_dir / v); };
  std::set<std::string> period_keys;

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw InputError("config: key '" + section + "' must sit inside a [section]");
    for (const auto& [name, node] : body) {
      const std::string key = section + "." + name;
      const std::string v = node.data();
      if (section == "data") {
        std::optional<fs::path>* slot = nullptr;
        if (name == "first_records") slot = &c.first_records;
        else if (name == "natives") slot = &c.natives;
        else if (name == "regions") slot = &c.regions;
        else if (name == "distance") slot = &c.distance;
        else if (name == "aliases") slot = &c.aliases;
        else if (name == "trade") slot = &c.trade;
        else if (name == "temperature") slot = &c.temperature;
        else if (name == "landcover") slot = &c.landcover;
        else if (name == "empires") slot = &c.empires;
        else if (name == "dyad_covariates") slot = &c.dyad_covariates;
        if (slot) {
          *slot = path(v);
        } else if (name == "taxon") {
          c.taxon = v;
        } else if (name == "window") {
          c.window = to_window(key, v);
        } else {
          throw InputError("config: unknown key '" + key + "'");
        }
      } else if (section == "model") {
        auto& m = c.model;
        if (name == "covariates") {
          for (auto w : words(v)) {
            const bool pw = !w.empty() && w.back() == '*';
            if (pw) w.pop_back();
            m.covariates.push_back({w, pw});
          }
        } else if (name == "periods") {
          m.period_breaks = v == "default" ? default_period_breaks() : numbers(key, v);
        } else if (name == "random_effects") {
          for (const auto& w : words(v)) {
            if (w == "species") m.random_effects.species = true;
            else if (w == "region") m.random_effects.region = true;
            else if (w != "none") throw InputError("config key '" + key + "': unknown family '" + w + "'");
          }
        } else if (name == "dyadic") {
          c.both_dyadic = v == "both";
          m.random_effects.dyadic = c.both_dyadic ? DyadicEffect::ordered : parse_dyadic(v);
        } else if (name == "ties") {
          m.ties = parse_ties(v);
        } else if (name == "decay") {
          m.decay = to_number(key, v);
        } else if (name == "top_k") {
          m.top_k = to_count(key, v);
        } else if (name == "last_invader") {
          if (v == "skip") m.last_invader = LastInvaderRule::skip;
          else if (v == "reset") m.last_invader = LastInvaderRule::reset;
          else throw InputError("config key '" + key + "' must be skip or reset");
        } else if (name == "source_regions") {
          if (v == "occupied") m.source_regions = SourceRegions::occupied;
          else if (v == "invaded_only") m.source_regions = SourceRegions::invaded_only;
          else throw InputError("config key '" + key + "' must be occupied or invaded_only");
        } else if (name == "distance_unit_km") {
          m.distance_unit_km = to_number(key, v);
        } else if (name == "log_sampling_effort") {
          m.log_sampling_effort = to_bool(key, v);
        } else {
          throw InputError("config: unknown key '" + key + "'");
        }
      } else if (section == "fit") {
        if (name == "max_iterations") c.max_iterations = static_cast<int>(to_count(key, v));
        else if (name == "sigma_lower") c.sigma_lower = to_number(key, v);
        else if (name == "sigma_upper") c.sigma_upper = to_number(key, v);
        else throw InputError("config: unknown key '" + key + "'");
      } else if (section == "per_unit") {
        c.per_unit[name] = to_number(key, v);
      } else if (section == "run") {
        if (name == "output") c.output = path(v);
        else if (name == "jobs") c.jobs = static_cast<int>(to_count(key, v));
        else if (name == "seed") c.seed = to_count(key, v);
        else throw InputError("config: unknown key '" + key + "'");
      } else if (section == "simulate") {
        auto& s = c.sim;
        if (name == "species") s.species = to_count(key, v);
        else if (name == "regions") s.regions = to_count(key, v);
        else if (name == "natives") s.natives = to_count(key, v);
        else if (name == "beta") s.beta = numbers(key, v);
        else if (name == "baseline_breaks") s.baseline_breaks = numbers(key, v);
        else if (name == "baseline_rates") s.baseline_rates = numbers(key, v);
        else if (name == "window") s.window = to_window(key, v);
        else if (name == "max_events") s.max_events = to_count(key, v);
        else if (name == "species_sd") s.species_sd = to_number(key, v);
        else if (name == "region_sd") s.region_sd = to_number(key, v);
        else if (name == "dyadic_sd") s.dyadic_sd = to_number(key, v);
        else if (name == "world_seed") s.world_seed = to_count(key, v);
        else if (name == "annual") s.annual = to_bool(key, v);
        else throw InputError("config: unknown key '" + key + "'");
      } else if (section == "manifest") {
        // written by the tools; informational only
      } else {
        throw InputError("config: unknown section [" + section + "]");
      }
    }
  }
  if (c.jobs < 1) throw InputError("config key 'run.jobs' must be >= 1");
  if (c.output.is_relative()) c.output = path(c.output.string());
  return c;
}

RunConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open config file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto c = parse_config(buf.str(), fs::absolute(file).parent_path());
  c.file = fs::absolute(file);
  return c;
}

std::string canonical_config(const RunConfig& c) {
  std::ostringstream o;
  auto opt = [&](const char* k, const std::optional<fs::path>& p) {
    if (p) o << k << " = " << p->string() << "\n";
  };
  o << "[data]\n";
  opt("first_records", c.first_records);
  opt("natives", c.natives);
  opt("regions", c.regions);
  opt("distance", c.distance);
  opt("aliases", c.aliases);
  opt("trade", c.trade);
  opt("temperature", c.temperature);
  opt("landcover", c.landcover);
  opt("empires", c.empires);
  opt("dyad_covariates", c.dyad_covariates);
  o << "taxon = " << c.taxon << "\n";
  o << "window = " << format_double(c.window.begin) << " " << format_double(c.window.end) << "\n";

  const auto& m = c.model;
  o << "\n[model]\ncovariates =";
  for (const auto& d : m.covariates) o << " " << d.name << (d.piecewise ? "*" : "");
  o << "\n";
  if (!m.period_breaks.empty()) o << "periods = " << join(m.period_breaks) << "\n";
  o << "random_effects =";
  if (m.random_effects.species) o << " species";
  if (m.random_effects.region) o << " region";
  if (!m.random_effects.species && !m.random_effects.region) o << " none";
  o << "\n";
  o << "dyadic = " << (c.both_dyadic ? "both" : to_string(m.random_effects.dyadic)) << "\n";
  o << "ties = " << to_string(m.ties) << "\n";
  o << "decay = " << format_double(m.decay) << "\n";
  o << "top_k = " << m.top_k << "\n";
  o << "last_invader = " << (m.last_invader == LastInvaderRule::skip ? "skip" : "reset") << "\n";
  o << "source_regions = " << (m.source_regions == SourceRegions::occupied ? "occupied" : "invaded_only") << "\n";
  o << "distance_unit_km = " << format_double(m.distance_unit_km) << "\n";
  o << "log_sampling_effort = " << (m.log_sampling_effort ? "true" : "false") << "\n";

  o << "\n[fit]\nmax_iterations = " << c.max_iterations << "\n";
  o << "sigma_lower = " << format_double(c.sigma_lower) << "\nsigma_upper = " << format_double(c.sigma_upper) << "\n";

  if (!c.per_unit.empty()) {
    o << "\n[per_unit]\n";
    for (const auto& [k, v] : c.per_unit) o << k << " = " << format_double(v) << "\n";
  }

  o << "\n[run]\noutput = " << c.output.string() << "\njobs = " << c.jobs << "\nseed = " << c.seed << "\n";

  const auto& s = c.sim;
  o << "\n[simulate]\nspecies = " << s.species << "\nregions = " << s.regions << "\nnatives = " << s.natives << "\n";
  if (!s.beta.empty()) o << "beta = " << join(s.beta) << "\n";
  o << "baseline_breaks = " << join(s.baseline_breaks) << "\nbaseline_rates = " << join(s.baseline_rates) << "\n";
  o << "window = " << format_double(s.window.begin) << " " << format_double(s.window.end) << "\n";
  o << "max_events = " << s.max_events << "\n";
  o << "species_sd = " << format_double(s.species_sd) << "\nregion_sd = " << format_double(s.region_sd)
    << "\ndyadic_sd = " << format_double(s.dyadic_sd) << "\n";
  o << "world_seed = " << s.world_seed << "\nannual = " << (s.annual ? "true" : "false") << "\n";
  return o.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rem
