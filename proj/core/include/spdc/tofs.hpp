#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spdc/jsa.hpp"

// Time-of-flight spectrometry: dispersive fibers map wavelength to arrival
// time, so a two-dimensional coincidence delay histogram is a stretched image
// of the joint spectral intensity.  This module simulates the forward process
// from a JSI and inverts measured histograms back to wavelength-domain JSIs,
// including the Poisson-bias-corrected purity estimate.
namespace spdc::tofs {

// One arm's dispersion unit.  The reference wavelength anchors the module's
// delay origin and is taken as the nominal degenerate wavelength when
// locating histogram features.
struct DispersionUnit {
  double dispersion_ps_per_nm = -1350.0;
  double reference_nm = 1550.0;
  double insertion_ps = 0.0;  // delay of the reference wavelength

  void validate() const;  // throws std::invalid_argument when D == 0
};

// Delay offset of a wavelength relative to the unit's reference.
double wavelength_to_delay(double delta_lambda_nm, const DispersionUnit& unit);
// Wavelength span covered by one time bin.
double bin_resolution_nm(const DispersionUnit& unit, double bin_ps);
// insertion + D * (lambda - reference).
double absolute_delay_ps(double lambda_nm, const DispersionUnit& unit);

// Independent RMS jitter contributions of the timing chain (trigger diode,
// tagger channels, one detector channel); they add in quadrature.
struct JitterModel {
  std::vector<double> contributions_ps;

  void validate() const;  // throws std::invalid_argument on negative entries
  // Trigger photodiode, two tagger channels and one detector channel of the
  // reference timing stack; combines to about 37 ps.
  static JitterModel reference_stack();
};

double combined_jitter_ps(const JitterModel& model);

struct DelayHistogram {
  Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  double bin_ps = 80.0;
  double signal_offset_ps = 0.0;  // left edge of bin 0, rows
  double idler_offset_ps = 0.0;   // left edge of bin 0, columns
  double period_ns = 0.0;         // pulse repetition period
  int features = 1;               // diagonal repetitions recorded

  void validate() const;
};

// Acquisition geometry.  Defaults follow the reference time tagger: 800 bins
// of 80 ps per axis, five features at the 76 MHz repetition period.
struct TofsSetup {
  DispersionUnit signal;
  DispersionUnit idler;
  JitterModel jitter = JitterModel::reference_stack();
  double bin_ps = 80.0;
  int bins = 800;
  double period_ns = 1e3 / 76.0;
  int features = 5;

  void validate() const;
};

// Draws `events` three-fold coincidences from the jsi, treated as a
// probability law over the grid points: each event picks a feature uniformly,
// maps its wavelength pair to delays through both arms, adds independent
// Gaussian jitter of the combined RMS per axis, and bins.  Out-of-range tails
// clamp into the edge bins so exactly `events` counts land in the histogram.
// Offsets are chosen bin-aligned with a six-sigma jitter margin; throws
// std::invalid_argument (listing the required span) when the histogram
// cannot hold every feature.  Work shards across a fixed set of substreams,
// so results are identical for every thread budget.
DelayHistogram simulate_histogram(const jsa::FrequencyGrid& grid, const Eigen::MatrixXd& jsi,
                                  const TofsSetup& setup, std::uint64_t events,
                                  std::uint64_t seed, unsigned threads = 1);

struct ReconstructedJsi {
  jsa::FrequencyGrid grid;
  Eigen::MatrixXd intensity;  // non-negative, unit sum
  Eigen::MatrixXd counts;     // raw cropped counts, for bias correction
  double mean_counts_per_bin = 0.0;
};

// Crops one diagonal feature (a window of half the repetition period around
// its nominal center) and converts the delay axes back to wavelength.
// Throws std::invalid_argument when the window leaves the histogram, the
// exclusion rule for corner features, and std::domain_error when the crop
// holds no counts.
ReconstructedJsi reconstruct_jsi(const DelayHistogram& hist, const DispersionUnit& signal,
                                 const DispersionUnit& idler, int feature);

// Purity of the phase-free square root of a reconstruction.
double reconstruction_purity(const ReconstructedJsi& rec);

struct CorrectedPurity {
  double raw = 0.0;        // purity of sqrt of the measured matrix
  double bias = 0.0;       // estimated counting-noise depression, corrected - raw
  double corrected = 0.0;
  double std_error = 0.0;  // spread (sample sd) of the one-layer resampled purities
  int resamples = 0;
};

// Counting-noise bias removal.  Shot noise depresses the measured purity
// because E[sqrt K] < sqrt(mu); the depression is evaluated in closed form
// from per-cell Poisson moments of a proxy mean field built from the counts
// (raw cells where well populated, locally averaged where sparse), and added
// back.  std_error is the spread of purities over resamples independent
// re-noised copies of the measurement, the one-sigma scale of a single noisy
// acquisition.  Requires raw integral non-negative counts and
// resamples >= 30 (the spread is unstable below that); throws
// std::invalid_argument otherwise.
CorrectedPurity poisson_corrected_purity(const jsa::FrequencyGrid& grid,
                                         const Eigen::MatrixXd& counts, int resamples,
                                         std::uint64_t seed);

struct PurityCurve {
  std::vector<std::uint64_t> events;        // cumulative budgets
  std::vector<double> mean_counts_per_bin;  // over the reconstructed crop
  std::vector<double> raw_purity;
  std::vector<double> corrected_purity;
  std::vector<double> corrected_se;
  int feature = 0;
};

// Raw and corrected purity of one reconstructed feature at growing event
// budgets.  The event stream is incremental: the histogram at checkpoint n is
// bit-identical to simulate_histogram with that budget.  Checkpoints must be
// strictly increasing and positive.
PurityCurve purity_vs_counts(const jsa::FrequencyGrid& grid, const Eigen::MatrixXd& jsi,
                             const TofsSetup& setup, std::span<const std::uint64_t> checkpoints,
                             int feature, int resamples, std::uint64_t seed,
                             unsigned threads = 1);

}  // namespace spdc::tofs
