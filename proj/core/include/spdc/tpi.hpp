#pragma once

#include <Eigen/Core>
#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

// Two-photon interference: splitting-ratio reconstruction, fringe-visibility
// Monte Carlo, lossy multi-mode networks with permanent-based multi-pair
// coincidence budgets, the combined visibility budget, and robust dip fitting.
namespace spdc::tpi {

// Single-photon count totals with one input blocked at a time: C_ij counts
// photons entering input i and leaving output j.
struct SplitterCounts {
  double c11 = 0.0;
  double c12 = 0.0;
  double c21 = 0.0;
  double c22 = 0.0;

  // The fiber beam splitter characterization this pipeline was built around.
  static SplitterCounts reference();
};

// Transmittance and reflectance of a two-port splitter, reconstructed from
// count ratios so input and output losses cancel.
struct SplitterEstimate {
  SplitterCounts counts;
  double f = 1.0;        // C11 C22 / (C12 C21)
  double tau = 0.5;      // transmittance, 1 / (1 + sqrt F)
  double rho = 0.5;      // reflectance, 1 - tau
  double tau_err = 0.0;  // first-order Poisson propagation; rho_err equals it
};

// Throws std::invalid_argument unless all four counts are positive.
SplitterEstimate splitting_ratio(const SplitterCounts& counts);

// Highest two-photon interference visibility an unbalanced splitter allows:
// 2 tau rho / (tau^2 + rho^2).  Requires tau + rho = 1 within 1e-9.
double splitter_limited_visibility(double tau, double rho);

// Classical two-beam fringe visibility at the splitter output,
// 2 sqrt(tau rho I1 I2) / (tau I1 + rho I2), from the analytic extrema of
// tau I1 + rho I2 + 2 sqrt(tau rho I1 I2) cos(phi).
double fringe_visibility(double i1, double i2, double tau, double rho);

struct FringeStats {
  double mean = 0.0;
  double sd = 0.0;
  int trials = 0;
};

// Visibility under input-power mismatch: each trial draws eps from
// Normal(0, sigma_eps) and splits the power as I_avg + |eps| into input 1 and
// I_avg - |eps| into input 2.  Throws std::invalid_argument on non-positive
// I_avg, negative sigma, or fewer than 2 trials.
FringeStats fringe_mc(double i_avg_uw, double sigma_eps_uw, double tau, double rho, int trials,
                      std::uint64_t seed);

// Average input power (microwatt) at which the reference splitter and the
// measured 0.3 uW power spread reproduce the reported fringe ceiling.
// Calibrated, not measured: the acquisition recorded only the spread.
double reference_fringe_power_uw();

// P(N pairs in one pulse) = (1 - p) p^N, and the probability mass beyond
// n_max pairs, p^(n_max + 1).
double pair_number_pmf(double p, int n);
double pair_number_tail(double p, int n_max);

// One SPDC source feeding a herald detector and one splitter input.
struct SourceModel {
  double pair_probability = 0.0;         // p per pulse
  double herald_efficiency = 1.0;        // crystal to herald detector
  double interference_efficiency = 1.0;  // crystal to splitter input
  double efficiency_err = 0.0;           // one sigma on both efficiencies
  double p_per_mw = 0.0;                 // linear pump-power mapping

  void validate() const;
  // Loss and gain figures that place the multi-pair visibility near the
  // reference operating point (99.7 percent at 5.8 mW).
  static SourceModel reference();
};

// Interferometer as a unitary on core plus auxiliary loss modes.  Core mode
// order: herald 1, splitter input 1, splitter input 2, herald 2.  Each lossy
// channel couples to its own auxiliary mode through an unbalanced splitter of
// transmittance equal to the channel efficiency.
struct LossyNetwork {
  Eigen::MatrixXcd unitary;
  int core_modes = 4;

  int modes() const { return static_cast<int>(unitary.rows()); }
  void validate() const;  // unitarity within 1e-10
};

// Balanced-phase splitter unitary [[sqrt rho, sqrt tau], [sqrt tau, -sqrt rho]]
// embedded between the two herald pass-throughs.
Eigen::MatrixXcd four_mode_core(double tau);

// Ten-mode network: input losses, then the core, then output losses.  Herald
// channels lose photons once; each splitter channel loses at the input and
// again at the output.
LossyNetwork embed_losses(const Eigen::MatrixXcd& core, const std::array<double, 2>& herald_eff,
                          const std::array<double, 2>& input_eff,
                          const std::array<double, 2>& output_eff);

// Matrix permanent by inclusion-exclusion with Gray-code column updates.
std::complex<double> permanent(const Eigen::MatrixXcd& m);
double permanent(const Eigen::MatrixXd& m);

enum class Photons { Indistinguishable, Distinguishable };

// Probability that input occupation `in` leaves the network as occupation
// `out`.  Indistinguishable photons use |Per(U_ST)|^2 with bosonic
// normalization; distinguishable ones use the permanent of the elementwise
// |U|^2 submatrix (independent walkers).  Occupations span all modes; at most
// 8 photons total.
double transition_probability(const LossyNetwork& net, std::span<const int> in,
                              std::span<const int> out, Photons mode);

// Total probability that every listed detector mode sees at least one photon
// at the output, with any content elsewhere (threshold detectors).
double coincidence_probability(const LossyNetwork& net, std::span<const int> in, Photons mode,
                               std::span<const int> detector_modes);

// Four-fold shorthand: detectors on all core output modes.
double coincidence_probability(const LossyNetwork& net, std::span<const int> in, Photons mode);

struct MultipairResult {
  double visibility = 0.0;  // (pD - pI) / pD at the nominal parameters
  double mean = 0.0;        // Monte Carlo over parameter uncertainty
  double sd = 0.0;
  double p_coincidence_distinguishable = 0.0;
  double p_coincidence_indistinguishable = 0.0;
  double truncation = 0.0;  // pair-number mass beyond the photon budget
  int trials = 0;
};

// Visibility with multi-pair emission: every pair-number combination of the
// two sources up to `max_photons` input photons, weighted by the geometric
// pair statistics, drives the lossy network in both distinguishability modes.
// Monte Carlo trials re-draw the splitter counts (Poisson) and efficiencies
// (Gaussian, clamped to [0,1]) within their uncertainties.
MultipairResult multipair_visibility(const SourceModel& source1, const SourceModel& source2,
                                     const SplitterEstimate& splitter, int max_photons,
                                     int trials, std::uint64_t seed, unsigned threads = 1);

struct PowerScan {
  std::vector<double> power_mw;
  std::vector<double> visibility;
  std::vector<double> sd;
  double slope_per_mw = 0.0;  // least-squares line through the points
  double intercept = 1.0;
};

// Multi-pair visibility across pump powers, p = p_per_mw * power for both
// sources, with the linear fit of the resulting curve.
PowerScan visibility_vs_power(std::span<const double> powers_mw, const SourceModel& source1,
                              const SourceModel& source2, const SplitterEstimate& splitter,
                              int max_photons, int trials, std::uint64_t seed,
                              unsigned threads = 1);

// Product of independent visibility ceilings.  Each factor must be in (0, 1].
double visibility_budget(std::span<const double> factors);

// Delay scan of four-fold coincidences through the interference dip.
struct DipDataset {
  std::vector<double> delay;          // strictly increasing, ps or mm
  std::vector<double> coincidences;   // non-negative counts
  std::vector<double> singles;        // optional, empty or one per point
  double seconds_per_point = 0.0;

  void validate() const;
};

struct DipFit {
  double baseline = 0.0;    // plateau level B
  double visibility = 0.0;  // depth V
  double center = 0.0;      // dip position
  double width = 0.0;       // gaussian sigma, in delay units
  double slope = 0.0;       // fractional drift per delay unit, 0 unless enabled
  double visibility_err = 0.0;
  double center_err = 0.0;
  double width_err = 0.0;
  double plateau_visibility = 0.0;  // model-free, from the four highest points
  bool robust = false;
  bool converged = false;
};

// Fits B (1 + m t) (1 - V exp(-(t - t0)^2 / 2 w^2)) by Levenberg-Marquardt;
// with `robust`, iteratively reweighted least squares with Tukey bisquare
// weights (tuning constant 4.685) tempers outliers.  Errors come from a
// parametric Poisson bootstrap of `bootstrap` refits.  Also reports the
// model-free visibility (plateau average minus minimum over plateau average,
// plateau = four highest counts).  Throws std::invalid_argument for fewer
// than 6 points and std::domain_error when no plateau stands above the
// minimum.
DipFit fit_dip(const DipDataset& data, bool linear_term, bool robust, int bootstrap,
               std::uint64_t seed);

}  // namespace spdc::tpi
