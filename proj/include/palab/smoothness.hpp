#pragma once

#include <vector>

#include "palab/charts.hpp"

namespace palab {

struct ScalingFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  std::vector<double> radii;      // radii kept after filtering
  std::vector<double> hess_norm;  // mean Frobenius norm of the Hessian at each kept radius
};

/// Fits log |D^2 H_p| against log rho, where H_p = H o Xi on sector 0.
/// A radius is kept only if its whole difference stencil lies in the pure-power part of the chart.
inline ScalingFit hp_second_derivative_scaling(const LocalChart& chart, const std::vector<double>& radii,
                                               double rel_step = 1e-3) {
  if (radii.size() < 8) throw ParameterError("scaling: need at least 8 radii");
  const auto [mn, mx] = std::minmax_element(radii.begin(), radii.end());
  if (!(*mn > 0.0) || *mx < 10.0 * *mn * (1.0 - 1e-12)) throw ParameterError("scaling: radii must span a decade");
  if (*mx >= chart.params().rho1) throw ParameterError("scaling: radii must lie below rho1");
  const int p = chart.p();
  const double L = chart.params().log_lambda;
  const double r1 = chart.params().r1;
  auto H = [&](Complex z, bool& ok) {
    if (sector_of(z, p) != 0) ok = false;
    const Complex s = chart.xi(z, 0);
    if (std::abs(s) > r1) ok = false;
    return L * s.real() * s.imag();
  };
  ScalingFit fit;
  const double taus[] = {0.2 * kPi / p, 0.5 * kPi / p, 0.8 * kPi / p};
  for (double rho : radii) {
    double acc = 0.0;
    bool ok = true;
    for (double tau : taus) {
      const Complex z = std::polar(rho, tau);
      const double h = rel_step * rho;
      const Complex ex(h, 0.0), ey(0.0, h);
      const double f0 = H(z, ok);
      const double hxx = (H(z + ex, ok) - 2.0 * f0 + H(z - ex, ok)) / (h * h);
      const double hyy = (H(z + ey, ok) - 2.0 * f0 + H(z - ey, ok)) / (h * h);
      const double hxy = (H(z + ex + ey, ok) - H(z + ex - ey, ok) - H(z - ex + ey, ok) + H(z - ex - ey, ok)) / (4.0 * h * h);
      acc += std::sqrt(hxx * hxx + hyy * hyy + 2.0 * hxy * hxy);
    }
    if (!ok) continue;
    fit.radii.push_back(rho);
    fit.hess_norm.push_back(acc / 3.0);
  }
  if (fit.radii.size() < 3) throw ParameterError("scaling: fewer than 3 usable radii");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < fit.radii.size(); ++i) {
    lx.push_back(std::log(fit.radii[i]));
    ly.push_back(std::log(fit.hess_norm[i]));
  }
  const PolyFit pf = polyfit(lx, ly, 1);
  fit.slope = pf.coef[1];
  fit.stderr_ = pf.stderr_[1];
  return fit;
}

}  // namespace palab
