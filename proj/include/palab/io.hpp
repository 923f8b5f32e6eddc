#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "palab/numerics.hpp"
#include "palab/surface.hpp"

namespace palab {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// INI text read with property_tree. Keys are addressed as "section.key"; keys before any header live in "run".
class Config {
 public:
  static Config parse(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ParameterError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    Config c;
    for (const auto& [name, node] : tree) {
      if (node.empty()) {
        c.set("run." + name, node.data());
        continue;
      }
      for (const auto& [key, leaf] : node) c.set(name + "." + key, leaf.data());
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    return parse(in);
  }

  /// Accepts "section.key=value" or "key=value" (section run).
  void apply_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ParameterError("override must look like key=value: " + text);
    std::string key = detail::trim(text.substr(0, eq));
    if (key.find('.') == std::string::npos) key = "run." + key;
    set(key, detail::trim(text.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) throw ParameterError("config key needs a section: " + key);
    values_[key.substr(0, dot)][key.substr(dot + 1)] = value;
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto dot = key.find('.');
    if (dot == std::string::npos) return std::nullopt;
    const auto s = values_.find(key.substr(0, dot));
    if (s == values_.end()) return std::nullopt;
    const auto v = s->second.find(key.substr(dot + 1));
    if (v == s->second.end()) return std::nullopt;
    return v->second;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [s, kv] : values_)
      for (const auto& [k, v] : kv) out.push_back(s + "." + k);
    return out;
  }

  std::string dump() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [s, kv] : values_) {
      if (!first) os << "\n";
      first = false;
      os << "[" << s << "]\n";
      for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    }
    return os.str();
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

struct Scale {
  long samples = 20000;       // tail / sojourn / clt / ldp samples
  long steps = 20000;         // n_max for return tails
  long lags = 100;            // correlation lags
  long orbit_len = 1000000;   // per-orbit length for correlations
  long orbits = 8;
  long n = 10000;             // Birkhoff length for clt
  double eps = 0.05;          // ldp deviation
  long crossings = 1000;
  long pairs = 1000;
  long segments = 1000;
  long lyap_steps = 200000;
};

/// Everything a run needs; round-trips through Config text without loss.
struct ExperimentConfig {
  SurfaceSpec model;
  std::string experiment = "default";
  std::uint64_t seed = 1;
  std::string out = "out";
  unsigned workers = 1;
  Scale scale;

  Config to_config() const {
    Config c;
    const auto& m = model;
    c.set("model.matrix", std::to_string(m.matrix[0]) + " " + std::to_string(m.matrix[1]) + " " +
                              std::to_string(m.matrix[2]) + " " + std::to_string(m.matrix[3]));
    c.set("model.branch1", m.branch1[0].str() + " " + m.branch1[1].str());
    c.set("model.branch2", m.branch2[0].str() + " " + m.branch2[1].str());
    c.set("model.cut", m.cut[0].str() + " " + m.cut[1].str());
    c.set("model.alpha", fmt_double(m.alpha));
    c.set("model.mu", fmt_double(m.mu));
    c.set("model.rho0", fmt_double(m.rho0));
    c.set("model.rho1", fmt_double(m.rho1));
    c.set("model.a_star", fmt_double(m.a_star));
    c.set("model.slowdown", m.slowdown ? "true" : "false");
    c.set("run.experiment", experiment);
    c.set("run.seed", std::to_string(seed));
    c.set("run.out", out);
    c.set("run.workers", std::to_string(workers));
    c.set("scale.samples", std::to_string(scale.samples));
    c.set("scale.steps", std::to_string(scale.steps));
    c.set("scale.lags", std::to_string(scale.lags));
    c.set("scale.orbit_len", std::to_string(scale.orbit_len));
    c.set("scale.orbits", std::to_string(scale.orbits));
    c.set("scale.n", std::to_string(scale.n));
    c.set("scale.eps", fmt_double(scale.eps));
    c.set("scale.crossings", std::to_string(scale.crossings));
    c.set("scale.pairs", std::to_string(scale.pairs));
    c.set("scale.segments", std::to_string(scale.segments));
    c.set("scale.lyap_steps", std::to_string(scale.lyap_steps));
    return c;
  }

  static ExperimentConfig from_config(const Config& c) {
    static const std::vector<std::string> known = {
        "model.matrix", "model.branch1", "model.branch2", "model.cut", "model.alpha", "model.mu", "model.rho0",
        "model.rho1", "model.a_star", "model.slowdown", "run.experiment", "run.seed", "run.out", "run.workers",
        "scale.samples", "scale.steps", "scale.lags", "scale.orbit_len", "scale.orbits", "scale.n", "scale.eps",
        "scale.crossings", "scale.pairs", "scale.segments", "scale.lyap_steps"};
    for (const auto& k : c.keys())
      if (std::find(known.begin(), known.end(), k) == known.end()) throw ParameterError("unknown config key " + k);
    ExperimentConfig e;
    auto& m = e.model;
    if (auto v = c.get("model.matrix")) {
      const auto t = split(*v);
      if (t.size() != 4) throw ParameterError("model.matrix needs 4 integers");
      for (int i = 0; i < 4; ++i) m.matrix[i] = to_long(t[i], "model.matrix");
    }
    auto pair = [&](const char* key, std::array<Rational, 2>& dst) {
      if (auto v = c.get(key)) {
        const auto t = split(*v);
        if (t.size() != 2) throw ParameterError(std::string(key) + " needs 2 rationals");
        dst = {Rational::parse(t[0]), Rational::parse(t[1])};
      }
    };
    pair("model.branch1", m.branch1);
    pair("model.branch2", m.branch2);
    pair("model.cut", m.cut);
    num(c, "model.alpha", m.alpha);
    num(c, "model.mu", m.mu);
    num(c, "model.rho0", m.rho0);
    num(c, "model.rho1", m.rho1);
    num(c, "model.a_star", m.a_star);
    if (auto v = c.get("model.slowdown")) {
      if (*v == "true" || *v == "1") m.slowdown = true;
      else if (*v == "false" || *v == "0") m.slowdown = false;
      else throw ParameterError("model.slowdown must be true or false");
    }
    if (auto v = c.get("run.experiment")) e.experiment = *v;
    if (auto v = c.get("run.seed")) e.seed = static_cast<std::uint64_t>(to_long(*v, "run.seed"));
    if (auto v = c.get("run.out")) e.out = *v;
    if (auto v = c.get("run.workers")) {
      const long w = to_long(*v, "run.workers");
      if (w < 1) throw ParameterError("run.workers must be positive");
      e.workers = static_cast<unsigned>(w);
    }
    auto& s = e.scale;
    integer(c, "scale.samples", s.samples);
    integer(c, "scale.steps", s.steps);
    integer(c, "scale.lags", s.lags);
    integer(c, "scale.orbit_len", s.orbit_len);
    integer(c, "scale.orbits", s.orbits);
    integer(c, "scale.n", s.n);
    num(c, "scale.eps", s.eps);
    integer(c, "scale.crossings", s.crossings);
    integer(c, "scale.pairs", s.pairs);
    integer(c, "scale.segments", s.segments);
    integer(c, "scale.lyap_steps", s.lyap_steps);
    m.seed = e.seed;
    return e;
  }

 private:
  static std::vector<std::string> split(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
  }
  static long to_long(const std::string& s, const std::string& key) {
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(s, &pos);
    } catch (const std::exception&) {
      throw ParameterError(key + ": not an integer");
    }
    if (pos != s.size()) throw ParameterError(key + ": not an integer");
    return v;
  }
  static void num(const Config& c, const std::string& key, double& dst) {
    if (auto v = c.get(key)) {
      std::size_t pos = 0;
      try {
        dst = std::stod(*v, &pos);
      } catch (const std::exception&) {
        throw ParameterError(key + ": not a number");
      }
      if (pos != v->size() || !std::isfinite(dst)) throw ParameterError(key + ": not a number");
    }
  }
  static void integer(const Config& c, const std::string& key, long& dst) {
    if (auto v = c.get(key)) {
      dst = to_long(*v, key);
      if (dst < 1) throw ParameterError(key + " must be positive");
    }
  }
};

// ---------------------------------------------------------------- files

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

/// Rows of numbers, printed with %.17g.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << fmt_double(r[i]);
    os << "\n";
  }
  write_text(path, os.str());
}

// ---------------------------------------------------------------- svg

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  bool line = false;  // polyline instead of markers
};

struct PlotSpec {
  std::string title;
  std::string xlabel = "n";
  std::string ylabel;
  bool logx = true, logy = true;
  std::vector<PlotSeries> series;
};

inline std::string svg_plot(const PlotSpec& spec) {
  const double W = 640, H = 440, ml = 70, mr = 20, mt = 40, mb = 50;
  auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y > 0);
  };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : spec.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (ty(v) - y0) / (y1 - y0) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << spec.title << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double gx = ml + (W - ml - mr) * k / 4.0, gy = H - mb - (H - mt - mb) * k / 4.0;
    char lx[32], ly[32];
    std::snprintf(lx, sizeof lx, spec.logx ? "1e%.2g" : "%.3g", fx);
    std::snprintf(ly, sizeof ly, spec.logy ? "1e%.2g" : "%.3g", fy);
    os << "<text x=\"" << gx << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << lx << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << ly << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << spec.xlabel << "</text>\n";
  os << "<text transform=\"translate(16," << H / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << spec.ylabel << "</text>\n";
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const auto& S = spec.series[s];
    const char* col = colors[s % 6];
    if (S.line) {
      os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < S.x.size(); ++i)
        if (usable(S.x[i], S.y[i])) os << px(S.x[i]) << "," << py(S.y[i]) << " ";
      os << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < S.x.size(); ++i)
        if (usable(S.x[i], S.y[i]))
          os << "<circle cx=\"" << px(S.x[i]) << "\" cy=\"" << py(S.y[i]) << "\" r=\"2.5\" fill=\"" << col << "\"/>\n";
    }
    os << "<text x=\"" << W - mr - 8 << "\" y=\"" << mt + 16 + 16 * s << "\" text-anchor=\"end\" fill=\"" << col << "\">"
       << S.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace palab
