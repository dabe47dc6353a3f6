#include "spdc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdc/constants.hpp"
#include "spdc/numerics.hpp"

namespace spdc::optimizer {

namespace {

double purity_at(const jsa::PmfOnGrid& pmf, jsa::PumpEnvelope pump, double sigma_nm) {
  pump.width_nm = sigma_nm;
  return jsa::purity(jsa::build_jsa(pump, pmf));
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + step * static_cast<double>(i);
  return v;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(
      std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

// nm of pump-wavelength width per rad/s of angular-frequency width.
double nm_per_rad_s(double center_nm) {
  const double lam = center_nm * 1e-9;
  return lam * lam / (kTwoPi * kSpeedOfLight) * 1e9;
}

}  // namespace

void SweepResult::validate() const {
  if (values.size() != purities.size() || values.empty())
    throw std::logic_error("sweep: value and purity series disagree");
  double best_sampled = 0.0;
  for (double p : purities) {
    if (!(p > 0.0) || p > 1.0 + 1e-12)
      throw std::logic_error("sweep: purity outside (0, 1]");
    best_sampled = std::max(best_sampled, p);
  }
  if (best_purity + 1e-12 < best_sampled)
    throw std::logic_error("sweep: refined optimum below a sampled point");
}

void ShaperModel::validate() const {
  if (!(lines_per_mm > 0.0)) throw std::invalid_argument("shaper: line density must be positive");
  if (!(center_nm > 0.0)) throw std::invalid_argument("shaper: center wavelength must be positive");
  if (!(focal_mm > 0.0)) throw std::invalid_argument("shaper: focal length must be positive");
  if (!(std::abs(displacement_mm) < focal_mm))
    throw std::invalid_argument("shaper: displacement must stay below the focal length");
}

SweepResult optimize_pump_width(const jsa::PmfOnGrid& pmf, double sigma_lo_nm,
                                double sigma_hi_nm, const jsa::PumpEnvelope& base,
                                std::size_t coarse_samples, unsigned threads) {
  if (!(sigma_lo_nm > 0.0) || !(sigma_hi_nm > sigma_lo_nm))
    throw std::invalid_argument("pump width range must be positive and ordered");
  if (coarse_samples < 5) throw std::invalid_argument("pump width scan needs >= 5 samples");

  SweepResult result;
  result.parameter = "sigma_pef";
  result.unit = "nm";
  result.grid_points = pmf.grid.signal_nm.size();
  result.pmf_source = pmf.source;
  result.values = linspace(sigma_lo_nm, sigma_hi_nm, coarse_samples);
  result.purities.resize(coarse_samples);
  num::parallel_for(coarse_samples, threads, [&](std::size_t i) {
    result.purities[i] = purity_at(pmf, base, result.values[i]);
  });

  const std::size_t k = argmax(result.purities);
  if (k == 0 || k + 1 == coarse_samples)
    throw std::domain_error("pump width range does not bracket a purity maximum");

  const auto opt = num::golden_section_max(
      [&](double s) { return purity_at(pmf, base, s); }, result.values[k - 1],
      result.values[k + 1], 1e-3);
  if (opt.value >= result.purities[k]) {
    result.best_value = opt.x;
    result.best_purity = opt.value;
  } else {
    result.best_value = result.values[k];
    result.best_purity = result.purities[k];
  }
  result.validate();
  return result;
}

SigmaRatioSweep sweep_sigma_ratio(const material::DispersionModel& model,
                                  const material::CollinearProcess& process,
                                  std::span<const double> ratios,
                                  const RatioSweepConfig& config, unsigned threads) {
  process.validate();
  if (ratios.empty()) throw std::invalid_argument("ratio sweep: no ratios given");
  for (double r : ratios)
    if (!(r > 0.05) || !(r < 0.5))
      throw std::invalid_argument("ratio sweep: sigma/L must lie in (0.05, 0.5)");
  if (!(config.length_mm > 0.0))
    throw std::invalid_argument("ratio sweep: crystal length must be positive");

  // Group-slowness mismatches set both the PMF width and the matched pump
  // width, which seeds the per-ratio search bracket and grid window.
  const double inv_vg_p =
      1.0 / material::group_velocity(model, process.pump_axis, process.pump_center_nm);
  const double tau_s =
      inv_vg_p - 1.0 / material::group_velocity(model, process.signal_axis,
                                                process.signal_center_nm);
  const double tau_i =
      inv_vg_p - 1.0 / material::group_velocity(model, process.idler_axis,
                                                process.idler_center_nm);
  const double product = tau_s * tau_i;
  const double spread = std::abs(tau_s - tau_i);
  if (!(spread > 0.0))
    throw std::domain_error("ratio sweep: degenerate group velocities, no PMF width scale");

  const double delta_k0 = material::degenerate_mismatch(model, process);
  const std::size_t n = ratios.size();

  SigmaRatioSweep sweep;
  sweep.max_purity.parameter = "sigma_over_L";
  sweep.max_purity.unit = "dimensionless";
  sweep.max_purity.grid_points = config.grid_points;
  sweep.max_purity.pmf_source = config.min_width_um > 0.0
                                    ? (config.variable_width ? "subcoherence-variable"
                                                             : "subcoherence-fixed")
                                    : "coherence";
  sweep.max_purity.values.assign(ratios.begin(), ratios.end());
  sweep.max_purity.purities.resize(n);
  sweep.optimal_sigma_nm.resize(n);

  num::parallel_for(n, threads, [&](std::size_t i) {
    const double sigma_z = ratios[i] * config.length_mm * 1e-3;

    // Antidiagonal amplitude width of the gaussian PMF in rad/s, and the
    // pump width that decorrelates it when the slownesses straddle zero.
    const double pmf_width = 2.0 / (sigma_z * spread);
    double seed_rad_s;
    if (product < 0.0)
      seed_rad_s = 1.0 / (sigma_z * std::sqrt(2.0 * std::abs(product)));
    else
      seed_rad_s = 0.5 * pmf_width;

    const double seed_nm = seed_rad_s * nm_per_rad_s(process.pump_center_nm);
    const double half_nm = std::max(
        config.min_half_width_nm,
        5.0 * 0.55 * pmf_width * nm_per_rad_s(process.signal_center_nm));
    const auto grid = jsa::FrequencyGrid::centered(process.pump_center_nm, half_nm,
                                                   config.grid_points);
    const auto map = jsa::make_phase_match_map(model, process, grid);

    poling::NonlinearityTarget target;
    target.profile = poling::NonlinearityTarget::Profile::Gaussian;
    target.length_mm = config.length_mm;
    target.sigma_mm = ratios[i] * config.length_mm;
    target.delta_k0 = delta_k0;

    const auto layout = config.min_width_um > 0.0
                            ? poling::engineer_subcoherence(target, config.min_width_um,
                                                            config.variable_width)
                            : poling::engineer_coherence_length(target);
    const auto pmf = jsa::evaluate_pmf(map, layout);
    const auto point = optimize_pump_width(pmf, 0.55 * seed_nm, 1.9 * seed_nm, config.base,
                                           config.coarse_samples, 1);
    sweep.max_purity.purities[i] = point.best_purity;
    sweep.optimal_sigma_nm[i] = point.best_value;
  });

  const std::size_t k = argmax(sweep.max_purity.purities);
  sweep.max_purity.best_value = sweep.max_purity.values[k];
  sweep.max_purity.best_purity = sweep.max_purity.purities[k];
  sweep.max_purity.validate();
  return sweep;
}

FwhmSweep purity_vs_fwhm(const jsa::PmfOnGrid& pmf, double fwhm_lo_nm, double fwhm_hi_nm,
                         const jsa::PumpEnvelope& base, std::size_t samples,
                         unsigned threads) {
  if (!(fwhm_lo_nm > 0.0) || !(fwhm_hi_nm > fwhm_lo_nm))
    throw std::invalid_argument("bandwidth range must be positive and ordered");
  if (samples < 5) throw std::invalid_argument("bandwidth sweep needs >= 5 samples");

  FwhmSweep out;
  out.sweep.parameter = "pump_fwhm";
  out.sweep.unit = "nm";
  out.sweep.grid_points = pmf.grid.signal_nm.size();
  out.sweep.pmf_source = pmf.source;
  out.sweep.values = linspace(fwhm_lo_nm, fwhm_hi_nm, samples);
  out.sweep.purities.resize(samples);
  num::parallel_for(samples, threads, [&](std::size_t i) {
    out.sweep.purities[i] = purity_at(pmf, base, out.sweep.values[i] / kGaussianFwhm);
  });

  const std::size_t k = argmax(out.sweep.purities);
  out.sweep.best_value = out.sweep.values[k];
  out.sweep.best_purity = out.sweep.purities[k];
  if (k > 0 && k + 1 < samples) {
    const auto opt = num::golden_section_max(
        [&](double f) { return purity_at(pmf, base, f / kGaussianFwhm); },
        out.sweep.values[k - 1], out.sweep.values[k + 1], 1e-3);
    if (opt.value >= out.sweep.best_purity) {
      out.sweep.best_value = opt.x;
      out.sweep.best_purity = opt.value;
    }
  }

  // Local quadratic about the optimum, over the nearest third of the range.
  const double window = (fwhm_hi_nm - fwhm_lo_nm) / 3.0;
  std::vector<double> u, p;
  for (std::size_t i = 0; i < samples; ++i)
    if (std::abs(out.sweep.values[i] - out.sweep.best_value) <= window) {
      u.push_back(out.sweep.values[i] - out.sweep.best_value);
      p.push_back(out.sweep.purities[i]);
    }
  if (u.size() >= 4) {
    const auto fit = num::quadratic_fit(u, p);
    out.curvature_per_nm2 = 2.0 * fit.c2;
    out.fit_r_squared = fit.r_squared;
  }
  out.sweep.validate();
  return out;
}

double gdd_from_displacement(const ShaperModel& shaper) {
  shaper.validate();
  const double d = 1e-3 / shaper.lines_per_mm;
  const double lambda = shaper.center_nm * 1e-9;
  const double sin_d = shaper.littrow
                           ? lambda / (2.0 * d)
                           : lambda / d - std::sin(shaper.incidence_deg * kPi / 180.0);
  if (!(std::abs(sin_d) < 1.0))
    throw std::domain_error("shaper: diffracted order is evanescent at this geometry");
  const double cos2 = 1.0 - sin_d * sin_d;
  const double gdd_s2 = 2.0 * (shaper.displacement_mm * 1e-3) * lambda * lambda * lambda /
                        (kTwoPi * kSpeedOfLight * kSpeedOfLight * d * d * cos2);
  return gdd_s2 * 1e24;
}

double transform_limited_duration_ps(double fwhm_nm, double center_nm) {
  if (!(fwhm_nm > 0.0) || !(center_nm > 0.0))
    throw std::invalid_argument("transform limit needs positive widths");
  const double lam = center_nm * 1e-9;
  const double dnu = kSpeedOfLight * fwhm_nm * 1e-9 / (lam * lam);
  return kGaussianTbp / dnu * 1e12;
}

double stretched_duration(double tau0_ps, double gdd_ps2) {
  if (!(tau0_ps > 0.0)) throw std::invalid_argument("pulse duration must be positive");
  const double x = 4.0 * std::log(2.0) * gdd_ps2 / (tau0_ps * tau0_ps);
  return tau0_ps * std::sqrt(1.0 + x * x);
}

double gdd_for_duration(double tau0_ps, double tau_ps) {
  if (!(tau0_ps > 0.0)) throw std::invalid_argument("pulse duration must be positive");
  if (tau_ps < tau0_ps)
    throw std::invalid_argument("measured duration lies below the transform limit");
  const double ratio = tau_ps / tau0_ps;
  return tau0_ps * tau0_ps * std::sqrt(ratio * ratio - 1.0) / (4.0 * std::log(2.0));
}

GddSweep purity_vs_gdd(const jsa::PmfOnGrid& pmf, double sigma_pef_nm, double gdd_lo_ps2,
                       double gdd_hi_ps2, std::size_t samples, unsigned threads) {
  if (!(sigma_pef_nm > 0.0)) throw std::invalid_argument("pump width must be positive");
  if (!(gdd_hi_ps2 > gdd_lo_ps2)) throw std::invalid_argument("GDD range must be ordered");
  if (samples < 2) throw std::invalid_argument("GDD sweep needs >= 2 samples");

  jsa::PumpEnvelope pump;
  pump.center_nm = pmf.grid.pump_center_nm;
  pump.width_nm = sigma_pef_nm;

  GddSweep out;
  out.sweep.parameter = "gdd";
  out.sweep.unit = "ps^2";
  out.sweep.grid_points = pmf.grid.signal_nm.size();
  out.sweep.pmf_source = pmf.source;
  out.sweep.values = linspace(gdd_lo_ps2, gdd_hi_ps2, samples);
  out.sweep.purities.resize(samples);
  out.tau0_ps = transform_limited_duration_ps(kGaussianFwhm * sigma_pef_nm,
                                              pmf.grid.pump_center_nm);
  out.duration_ps.resize(samples);
  num::parallel_for(samples, threads, [&](std::size_t i) {
    jsa::PumpEnvelope local = pump;
    local.gdd_ps2 = out.sweep.values[i];
    out.sweep.purities[i] = jsa::purity(jsa::build_jsa(local, pmf));
    out.duration_ps[i] = stretched_duration(out.tau0_ps, out.sweep.values[i]);
  });
  out.flat_phase_purity = jsa::purity(jsa::build_jsa(pump, pmf));

  const std::size_t k = argmax(out.sweep.purities);
  out.sweep.best_value = out.sweep.values[k];
  out.sweep.best_purity = out.sweep.purities[k];
  out.sweep.validate();
  return out;
}

GddInversion invert_pulse_stretching(const jsa::PmfOnGrid& pmf, double sigma_pef_nm,
                                     double tau0_ps, double tau_ps, double tau_err_ps) {
  if (!(sigma_pef_nm > 0.0)) throw std::invalid_argument("pump width must be positive");
  if (tau_err_ps < 0.0) throw std::invalid_argument("duration uncertainty must be >= 0");

  GddInversion inv;
  inv.gdd_ps2 = gdd_for_duration(tau0_ps, tau_ps);
  inv.gdd_lo_ps2 =
      tau_ps - tau_err_ps <= tau0_ps ? 0.0 : gdd_for_duration(tau0_ps, tau_ps - tau_err_ps);
  inv.gdd_hi_ps2 = gdd_for_duration(tau0_ps, tau_ps + tau_err_ps);

  jsa::PumpEnvelope pump;
  pump.center_nm = pmf.grid.pump_center_nm;
  pump.width_nm = sigma_pef_nm;
  const auto eval = [&](double gdd) {
    jsa::PumpEnvelope local = pump;
    local.gdd_ps2 = gdd;
    return jsa::purity(jsa::build_jsa(local, pmf));
  };
  inv.purity_bound = eval(inv.gdd_ps2);
  inv.purity_hi = eval(inv.gdd_lo_ps2);
  inv.purity_lo = eval(inv.gdd_hi_ps2);
  return inv;
}

}  // namespace spdc::optimizer
