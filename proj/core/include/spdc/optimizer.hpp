#pragma once

#include <span>
#include <string>
#include <vector>

#include "spdc/jsa.hpp"
#include "spdc/poling.hpp"

// Scalar purity optimizations and one-parameter sweeps: pump-width matching,
// profile-width trade-off curves, pump-bandwidth tolerance and the group
// delay dispersion budget of a grating stretcher.
namespace spdc::optimizer {

// One scalar parameter swept against spectral purity.
struct SweepResult {
  std::string parameter;
  std::string unit;
  std::vector<double> values;
  std::vector<double> purities;
  double best_value = 0.0;   // refined argmax when refinement ran
  double best_purity = 0.0;  // never below the best sampled purity
  std::size_t grid_points = 0;  // per-axis JSA resolution behind each purity
  std::string pmf_source;

  void validate() const;  // throws std::logic_error on malformed results
};

// Folded 4f stretcher around a reflective grating.  Displacing the fold
// mirror by delta from the imaging condition leaves uncompensated material
// path in the dispersed arm; the double pass accumulates
// GDD = 2 delta lambda^3 / (2 pi c^2 d^2 cos^2 theta_d).
struct ShaperModel {
  double lines_per_mm = 2400.0;
  double center_nm = 775.0;
  bool littrow = true;         // incidence angle solving 2 d sin(theta) = lambda
  double incidence_deg = 0.0;  // honoured when littrow is false
  double focal_mm = 500.0;
  double displacement_mm = 0.0;

  void validate() const;  // throws std::invalid_argument
};

// Coarse scan of purity over pump width (intensity-rms, nm) followed by
// golden-section refinement to 1e-3 nm.  `base` supplies the pump shape and
// spectral phase; its width is overwritten per evaluation.  Throws
// std::domain_error when the coarse scan maximum sits on the range boundary.
SweepResult optimize_pump_width(const jsa::PmfOnGrid& pmf, double sigma_lo_nm,
                                double sigma_hi_nm, const jsa::PumpEnvelope& base = {},
                                std::size_t coarse_samples = 13, unsigned threads = 1);

// Profile-width trade-off: per ratio sigma/L, engineer a layout, evaluate its
// PMF and re-optimize the pump width.
struct RatioSweepConfig {
  double length_mm = 30.0;
  double min_width_um = 0.0;    // 0 selects the coherence-length generator
  bool variable_width = false;  // honoured when min_width_um > 0
  std::size_t grid_points = 512;
  double min_half_width_nm = 4.0;  // grid window floor; widened for broad PMFs
  std::size_t coarse_samples = 9;
  jsa::PumpEnvelope base{};
};

struct SigmaRatioSweep {
  SweepResult max_purity;                // purity at the per-ratio pump optimum
  std::vector<double> optimal_sigma_nm;  // the optimum itself, aligned with values
};

// Ratios must lie in (0.05, 0.5).  Small ratios make broad phase-matching
// functions, so each ratio gets its own grid window sized from the
// group-velocity mismatch, and the pump search bounds are seeded from the
// same slopes; no ratio-dependent inputs need to be supplied.
SigmaRatioSweep sweep_sigma_ratio(const material::DispersionModel& model,
                                  const material::CollinearProcess& process,
                                  std::span<const double> ratios,
                                  const RatioSweepConfig& config = {}, unsigned threads = 1);

// Purity against pump intensity FWHM on a fixed PMF, with the local quadratic
// of the curve at its (refined) maximum.
struct FwhmSweep {
  SweepResult sweep;
  double curvature_per_nm2 = 0.0;  // d2P/dF2 at the optimum, negative
  double fit_r_squared = 0.0;
};

FwhmSweep purity_vs_fwhm(const jsa::PmfOnGrid& pmf, double fwhm_lo_nm, double fwhm_hi_nm,
                         const jsa::PumpEnvelope& base = {}, std::size_t samples = 25,
                         unsigned threads = 1);

// Double-pass grating dispersion of the shaper at its configured geometry,
// in ps^2, odd in the displacement.  Throws std::domain_error when the
// diffracted order is evanescent.
double gdd_from_displacement(const ShaperModel& shaper);

// Transform-limited intensity-FWHM duration of a Gaussian pulse of the given
// spectral FWHM, via the 2 ln 2 / pi time-bandwidth product.
double transform_limited_duration_ps(double fwhm_nm, double center_nm);

// Gaussian-pulse stretching law tau0 * sqrt(1 + (4 ln 2 G / tau0^2)^2).
double stretched_duration(double tau0_ps, double gdd_ps2);

// Inverse of the stretching law; throws std::invalid_argument when the
// measured duration falls below the transform limit.
double gdd_for_duration(double tau0_ps, double tau_ps);

// Purity degradation under quadratic spectral phase at fixed pump width,
// paired with the matching pulse-duration curve.
struct GddSweep {
  SweepResult sweep;                // parameter gdd, ps^2
  std::vector<double> duration_ps;  // stretched duration per sample
  double tau0_ps = 0.0;             // transform limit of the configured pump
  double flat_phase_purity = 0.0;
};

GddSweep purity_vs_gdd(const jsa::PmfOnGrid& pmf, double sigma_pef_nm, double gdd_lo_ps2,
                       double gdd_hi_ps2, std::size_t samples = 25, unsigned threads = 1);

// Measured-duration inversion: the two signs of GDD compatible with a
// stretched duration give symmetric intervals; purity is even in GDD, so the
// bound is reported on the positive branch.
struct GddInversion {
  double gdd_ps2 = 0.0;      // |GDD| at the central duration
  double gdd_lo_ps2 = 0.0;   // from tau - tau_err, clamped at 0
  double gdd_hi_ps2 = 0.0;   // from tau + tau_err
  double purity_bound = 0.0; // at the central GDD
  double purity_lo = 0.0;    // at gdd_hi (worst in the interval)
  double purity_hi = 0.0;    // at gdd_lo
};

GddInversion invert_pulse_stretching(const jsa::PmfOnGrid& pmf, double sigma_pef_nm,
                                     double tau0_ps, double tau_ps, double tau_err_ps);

}  // namespace spdc::optimizer
