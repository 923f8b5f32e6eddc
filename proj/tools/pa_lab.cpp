// pa-lab: experiment runner for the slowed pseudo-Anosov model.
// Exit status: 0 ok, 1 a checked identity or inequality failed, 2 bad configuration, 3 I/O failure.

#include <CLI11.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "palab/io.hpp"
#include "palab/smoothness.hpp"
#include "palab/stats.hpp"
#include "palab/verify.hpp"

using namespace palab;

namespace {

struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* f, auto... v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

class Summary {
 public:
  void line(const std::string& key, const std::string& value) { os_ << key << " = " << value << "\n"; }
  void num(const std::string& key, double v) { line(key, fmt_double(v)); }
  void fit(const std::string& prefix, const LogLogFit& f, const Window& w) {
    num(prefix + ".slope", f.slope);
    num(prefix + ".stderr", f.stderr_);
    line(prefix + ".window", fmt_double(w.lo) + " " + fmt_double(w.hi));
    num(prefix + ".curvature_t", f.curvature_t);
    line(prefix + ".curvature_flag", f.curvature_flag ? "true" : "false");
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

struct Run {
  ExperimentConfig cfg;
  std::string dir;
  Summary summary;

  void exponents() {
    const GammaExponents g = gamma_exponents(cfg.model.alpha, cfg.model.mu);
    summary.num("alpha", cfg.model.alpha);
    summary.num("mu", cfg.model.mu);
    summary.num("gamma", g.gamma);
    summary.num("gamma_prime", g.gamma_prime);
    summary.line("window.tail", fmt_double(-(g.gamma - 1.0)) + " " + fmt_double(-(g.gamma_prime - 1.0)));
    summary.line("window.corr", fmt_double(-(g.gamma - 2.0)) + " " + fmt_double(-(g.gamma_prime - 2.0)));
    summary.num("bound.ldp", -(g.gamma_prime - 2.0));
    summary.line("workers", std::to_string(cfg.workers));
    summary.line("seed", std::to_string(cfg.seed));
  }

  void finish() {
    write_text(dir + "/config.resolved", cfg.to_config().dump());
    write_text(dir + "/summary.txt", summary.str());
    std::cout << summary.str();
  }
};

Run start(const ExperimentConfig& cfg, const std::string& name) {
  Run r;
  r.cfg = cfg;
  r.cfg.experiment = name;
  r.dir = cfg.out + "/" + name;
  ensure_dir(r.dir);
  r.exponents();
  return r;
}

void tail_csv(const std::string& path, const TailEstimate& t) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.thresholds.size(); ++i)
    rows.push_back({t.thresholds[i], static_cast<double>(t.survivors[i]), static_cast<double>(t.total),
                    static_cast<double>(t.survivors[i]) / static_cast<double>(t.total)});
  write_csv(path, {"n", "survivors", "total", "survival"}, rows);
}

PlotSeries fit_line(const LogLogFit& f, const Window& w) {
  return {"fit", {w.lo, w.hi}, {std::exp(f.intercept) * std::pow(w.lo, f.slope), std::exp(f.intercept) * std::pow(w.hi, f.slope)}, true};
}

void tail_svg(const std::string& path, const std::string& title, const TailEstimate& t) {
  PlotSpec p;
  p.title = title;
  p.ylabel = "P(value > n)";
  PlotSeries data{"survival", {}, {}, false};
  for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
    data.x.push_back(t.thresholds[i]);
    data.y.push_back(static_cast<double>(t.survivors[i]) / static_cast<double>(t.total));
  }
  p.series.push_back(data);
  if (t.fit_available) p.series.push_back(fit_line(t.fit, t.window));
  write_text(path, svg_plot(p));
}

// ------------------------------------------------------------------ subcommands

int cmd_gamma(double alpha, double mu) {
  const GammaExponents g = gamma_exponents(alpha, mu);
  std::printf("gamma = %.6g\n", g.gamma);
  std::printf("gamma_prime = %.6g\n", g.gamma_prime);
  std::printf("beta = %.6g\nbeta1 = %.6g\n", g.beta, g.beta1);
  std::printf("tail slope window = [%.4f, %.4f]\n", -(g.gamma - 1.0), -(g.gamma_prime - 1.0));
  std::printf("correlation slope window = [%.4f, %.4f]\n", -(g.gamma - 2.0), -(g.gamma_prime - 2.0));
  return 0;
}

int cmd_verify_local(const ExperimentConfig& cfg) {
  Run r = start(cfg, "verify-local");
  const ReferenceModel m(cfg.model);
  const auto& q = m.params();
  const LocalChart& chart = m.chart();
  const Slowdown& sd = chart.slowdown();
  std::mt19937_64 rng(cfg.seed);
  double seam = 0.0, hdrift = 0.0, jac = 0.0, area = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Complex z = std::polar(chart.pipeline_radius() * std::sqrt(uniform01(rng)), 2 * kPi * uniform01(rng));
    const PlanePoint s{z.real(), z.imag()};
    const PlanePoint g = sd.flow(s, 1.0);
    hdrift = std::max(hdrift, std::abs(g.s1 * g.s2 - s.s1 * s.s2) / std::abs(s.s1 * s.s2));
    if (std::sqrt(2.0 * std::abs(s.s1 * s.s2)) > q.r0) {
      const PlanePoint l = sd.linear(s, 1.0);
      seam = std::max(seam, std::hypot(g.s1 - l.s1, g.s2 - l.s2) / l.norm());
    }
    if (q.enabled) {
      const Mat2 J = m.plane_jacobian(z, Direction::Forward);
      jac = std::max(jac, std::abs((J.a * J.d - J.b * J.c) * sd.psi(s.norm2()) / sd.psi(g.norm2()) - 1.0));
    }
    const Complex w = std::polar(q.rho1 * std::sqrt(uniform01(rng)), 2 * kPi * uniform01(rng));
    const double h = 1e-6 * std::abs(w);
    auto G = [&](Complex x) { return chart.local_g(x, Direction::Forward); };
    const Complex dx = (G(w + Complex(h, 0)) - G(w - Complex(h, 0))) / (2 * h);
    const Complex dy = (G(w + Complex(0, h)) - G(w - Complex(0, h))) / (2 * h);
    const double det = dx.real() * dy.imag() - dx.imag() * dy.real();
    area = std::max(area, std::abs(det * chart.omega_p_density(G(w)).value / chart.omega_p_density(w).value - 1.0));
  }
  std::vector<double> radii;
  for (int i = 0; i < 12; ++i) radii.push_back(0.9 * chart.pure_power_radius() * std::pow(10.0, -2.0 * i / 11.0));
  const ScalingFit sc = hp_second_derivative_scaling(chart, radii);
  const double want = 2.0 / (1.0 - q.alpha) - 2.0;
  r.summary.num("seam.max_rel", seam);
  r.summary.num("s1s2.max_rel_drift", hdrift);
  r.summary.num("jacobian.max_rel", jac);
  r.summary.num("local_area.max_rel", area);
  r.summary.num("hp_scaling.slope", sc.slope);
  r.summary.num("hp_scaling.expected", want);
  const bool ok = seam <= 1e-12 && hdrift <= 1e-10 && jac <= 1e-7 && area <= 1e-6 && std::abs(sc.slope - want) <= 0.05;
  r.summary.line("result", ok ? "pass" : "fail");
  r.finish();
  if (!ok) throw AssertionFailure("local identities out of tolerance");
  return 0;
}

int cmd_verify_lemmas(const ExperimentConfig& cfg) {
  Run r = start(cfg, "verify-lemmas");
  const ReferenceModel m(cfg.model);
  const LocalChart& chart = m.chart();
  const Slowdown& sd = chart.slowdown();
  const double mu = cfg.model.mu;
  const S1S2Suite s = s1s2_suite(sd, cfg.scale.crossings, derive_seed(cfg.seed, 4), cfg.workers);
  r.summary.line("crossings", std::to_string(s.crossings));
  r.summary.line("crossings.failing", std::to_string(s.failures));
  r.summary.num("crossings.worst_margin", s.worst.worst());
  const SpreadSuite p = spread_suite(sd, mu, cfg.scale.pairs, derive_seed(cfg.seed, 5), cfg.workers);
  r.summary.line("pairs", std::to_string(p.pairs));
  r.summary.line("pairs.admissible", std::to_string(p.admissible));
  r.summary.num("pairs.deviation_margin", p.worst_deviation_margin);
  r.summary.num("pairs.upper_envelope", p.upper);
  r.summary.num("pairs.lower_envelope", p.lower);
  r.summary.line("pairs.t_ratio_range", fmt_double(p.ratio_min) + " " + fmt_double(p.ratio_max));
  const LengthReport L = verify_length_ratio(cfg.scale.segments, chart, mu, derive_seed(cfg.seed, 6), 1e-2, cfg.workers);
  r.summary.line("segments", std::to_string(L.records.size() + L.failed));
  r.summary.line("segments.unfinished", std::to_string(L.failed));
  r.summary.num("segments.lower_envelope", L.lower);
  r.summary.num("segments.upper_envelope", L.upper);
  r.summary.line("segments.polynomial_flag", L.polynomial ? "true" : "false");
  std::vector<std::vector<double>> rows;
  for (const auto& x : L.records) rows.push_back({static_cast<double>(x.n), static_cast<double>(x.m), x.ratio});
  write_csv(r.dir + "/lengths.csv", {"n", "m", "ratio"}, rows);
  PlotSpec plot;
  plot.title = "curve length ratio";
  plot.xlabel = "m - n";
  plot.ylabel = "L(g^m) / L(g^n)";
  PlotSeries pts{"segments", {}, {}, false};
  for (const auto& x : L.records) {
    pts.x.push_back(static_cast<double>(x.m - x.n));
    pts.y.push_back(x.ratio);
  }
  plot.series.push_back(pts);
  write_text(r.dir + "/lengths.svg", svg_plot(plot));
  const bool ok = s.failures == 0 && (p.admissible == 0 || p.worst_deviation_margin >= 0.0);
  r.summary.line("result", ok ? "pass" : "fail");
  r.finish();
  if (!ok) throw AssertionFailure("trajectory inequalities violated");
  return 0;
}

int cmd_tail(const ExperimentConfig& cfg) {
  Run r = start(cfg, "tail");
  const ReferenceModel m(cfg.model);
  const RectSpec rect = default_return_rect(m);
  const TailEstimate t = return_tail(rect, cfg.scale.steps, cfg.scale.samples, m, cfg.seed, {cfg.workers, 1000});
  r.summary.line("rect.center", fmt_double(rect.center.x) + " " + fmt_double(rect.center.y));
  r.summary.line("samples", std::to_string(t.total));
  r.summary.line("censored", std::to_string(t.total - t.completed));
  if (t.fit_available) r.summary.fit("fit", t.fit, t.window);
  else r.summary.line("fit", "unavailable");
  tail_csv(r.dir + "/tail.csv", t);
  tail_svg(r.dir + "/tail.svg", "first-return survival", t);
  r.finish();
  return 0;
}

int cmd_sojourn(const ExperimentConfig& cfg) {
  Run r = start(cfg, "sojourn");
  const ReferenceModel m(cfg.model);
  const SojournReport s = sojourn_tail(cfg.scale.samples, m, cfg.seed, 1000000, {cfg.workers, 1000});
  r.summary.line("visits", std::to_string(s.visits.size()));
  r.summary.line("T0", std::to_string(s.T0));
  r.summary.num("depth_rank_corr", s.depth_rank_corr);
  r.summary.line("capped", std::to_string(s.capped));
  if (s.tail.fit_available) r.summary.fit("fit", s.tail.fit, s.tail.window);
  tail_csv(r.dir + "/sojourn.csv", s.tail);
  tail_svg(r.dir + "/sojourn.svg", "sojourn survival", s.tail);
  r.finish();
  return 0;
}

int cmd_corr(const ExperimentConfig& cfg) {
  Run r = start(cfg, "corr");
  const ReferenceModel m(cfg.model);
  const Observable b = observables::bump(m, default_return_rect(m).center, 0.2);
  CorrOptions o;
  o.n_orbits = cfg.scale.orbits;
  o.workers = cfg.workers;
  const CorrSeries c = correlations(b, b, cfg.scale.lags, cfg.scale.orbit_len, m, cfg.seed, o);
  r.summary.line("observable", b.name);
  r.summary.line("orbits", std::to_string(c.orbits));
  if (c.fit_available) r.summary.fit("fit", c.fit, c.window);
  else r.summary.line("fit", "unavailable (fewer than 5 significant lags)");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.lags.size(); ++i) rows.push_back({static_cast<double>(c.lags[i]), c.corr[i], c.stderr_[i]});
  write_csv(r.dir + "/corr.csv", {"n", "corr", "stderr"}, rows);
  PlotSpec p;
  p.title = "correlations";
  p.ylabel = "Cor_n";
  PlotSeries data{"corr", {}, {}, false};
  for (std::size_t i = 1; i < c.lags.size(); ++i) {
    data.x.push_back(static_cast<double>(c.lags[i]));
    data.y.push_back(c.corr[i]);
  }
  p.series.push_back(data);
  if (c.fit_available) p.series.push_back(fit_line(c.fit, c.window));
  write_text(r.dir + "/corr.svg", svg_plot(p));
  r.finish();
  return 0;
}

int cmd_clt(const ExperimentConfig& cfg) {
  Run r = start(cfg, "clt");
  const ReferenceModel m(cfg.model);
  CltOptions o;
  o.workers = cfg.workers;
  const CltResult c = clt_check(observables::trig(1, 1), cfg.scale.n, cfg.scale.samples, m, cfg.seed, o);
  r.summary.num("n", static_cast<double>(cfg.scale.n));
  r.summary.num("ks", c.ks);
  r.summary.num("ks.bootstrap_se", c.ks_bootstrap_se);
  r.summary.num("sigma2", c.sigma2);
  r.summary.num("mean", c.mean);
  r.summary.line("cohomology_suspect", c.cohomology_suspect ? "true" : "false");
  std::vector<std::vector<double>> rows;
  PlotSpec p;
  p.title = "normalized Birkhoff sums";
  p.xlabel = "quantile";
  p.ylabel = "value";
  p.logx = p.logy = false;
  PlotSeries emp{"empirical", {}, {}, true}, gau{"gaussian", {}, {}, true};
  for (int k = 1; k < 100; ++k) {
    const double u = k / 100.0;
    const double e = c.z[static_cast<std::size_t>(u * static_cast<double>(c.z.size() - 1))];
    const double g = c.sigma_hat * boost::math::quantile(boost::math::normal(), u);
    rows.push_back({u, e, g});
    emp.x.push_back(u);
    emp.y.push_back(e);
    gau.x.push_back(u);
    gau.y.push_back(g);
  }
  write_csv(r.dir + "/clt.csv", {"quantile", "empirical", "gaussian"}, rows);
  p.series = {emp, gau};
  write_text(r.dir + "/clt.svg", svg_plot(p));
  r.finish();
  return 0;
}

int cmd_ldp(const ExperimentConfig& cfg) {
  Run r = start(cfg, "ldp");
  const ReferenceModel m(cfg.model);
  LdpOptions o;
  o.workers = cfg.workers;
  const auto grid = log_grid(10.0, 1000.0, 9);
  const LdpResult d = large_deviations(observables::trig(1, 0), cfg.scale.eps, grid, cfg.scale.samples, m, cfg.seed, o);
  r.summary.num("eps", cfg.scale.eps);
  r.summary.num("mean", d.mean);
  r.summary.line("all_zero", d.all_zero ? "true" : "false");
  if (d.fit_available) r.summary.fit("fit", d.fit, d.window);
  else r.summary.line("fit", "unavailable");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.n.size(); ++i) rows.push_back({d.n[i], d.prob[i]});
  write_csv(r.dir + "/ldp.csv", {"n", "prob"}, rows);
  PlotSpec p;
  p.title = "deviation probability";
  p.ylabel = "P(|S_n/n - mean| > eps)";
  p.series.push_back({"prob", d.n, d.prob, false});
  if (d.fit_available) p.series.push_back(fit_line(d.fit, d.window));
  write_text(r.dir + "/ldp.svg", svg_plot(p));
  r.finish();
  return 0;
}

int cmd_lyapunov(const ExperimentConfig& cfg) {
  Run r = start(cfg, "lyapunov");
  const ReferenceModel m(cfg.model);
  const SurfacePoint p{0.31, 0.42, 0};
  const double fwd = m.lyapunov_exponent(p, cfg.scale.lyap_steps).exponent;
  const double bwd = m.lyapunov_exponent(p, cfg.scale.lyap_steps, Direction::Backward).exponent;
  r.summary.num("log_lambda", std::log(m.lambda()));
  r.summary.num("forward", fwd);
  r.summary.num("backward", bwd);
  r.summary.num("sum", fwd + bwd);
  r.finish();
  return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
  Run r = start(cfg, "report");
  std::ostringstream all;
  all << r.summary.str();
  for (const char* name : {"verify-local", "verify-lemmas", "tail", "sojourn", "corr", "clt", "ldp", "lyapunov"}) {
    const std::string path = cfg.out + "/" + name + "/summary.txt";
    if (!std::filesystem::exists(path)) {
      all << "\n[" << name << "]\nmissing\n";
      continue;
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    all << "\n[" << name << "]\n" << in.rdbuf();
  }
  write_text(r.dir + "/report.txt", all.str());
  write_text(r.dir + "/config.resolved", r.cfg.to_config().dump());
  std::cout << all.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for a slowed-down pseudo-Anosov map"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;

  double alpha = 0.2, mu = 0.25;
  auto* gamma = app.add_subcommand("gamma", "print the exponents for (alpha, mu)");
  gamma->add_option("--alpha", alpha)->check(CLI::Range(0.0, 1.0));
  gamma->add_option("--mu", mu)->check(CLI::Range(0.0, 1.0));

  const std::vector<std::pair<std::string, std::string>> names = {
      {"verify-local", "construction identities, conservation and smoothness"},
      {"verify-lemmas", "trajectory inequalities and curve lengths"},
      {"tail", "first-return time tail"},
      {"sojourn", "sojourn times near the cone points"},
      {"corr", "decay of correlations"},
      {"clt", "central limit check"},
      {"ldp", "large deviation probabilities"},
      {"lyapunov", "Lyapunov exponents"},
      {"report", "collect the summaries under the output directory"}};
  std::vector<CLI::App*> subs;
  for (const auto& [n, d] : names) {
    auto* s = app.add_subcommand(n, d);
    s->add_option("--config", config_path, "INI config file");
    s->add_option("--seed", seed, "base seed");
    s->add_option("--out", out, "output directory");
    s->add_option("overrides", overrides, "section.key=value");
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gamma->parsed()) return cmd_gamma(alpha, mu);
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& o : overrides) c.apply_override(o);
    ExperimentConfig cfg = ExperimentConfig::from_config(c);
    for (auto* s : subs) {
      if (!s->parsed()) continue;
      if (s->count("--seed")) cfg.seed = seed;
      if (s->count("--out")) cfg.out = out;
      cfg.model.seed = cfg.seed;
      const std::string n = s->get_name();
      if (n == "verify-local") return cmd_verify_local(cfg);
      if (n == "verify-lemmas") return cmd_verify_lemmas(cfg);
      if (n == "tail") return cmd_tail(cfg);
      if (n == "sojourn") return cmd_sojourn(cfg);
      if (n == "corr") return cmd_corr(cfg);
      if (n == "clt") return cmd_clt(cfg);
      if (n == "ldp") return cmd_ldp(cfg);
      if (n == "lyapunov") return cmd_lyapunov(cfg);
      if (n == "report") return cmd_report(cfg);
    }
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return 1;
  } catch (const ToleranceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
