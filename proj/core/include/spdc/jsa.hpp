#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "spdc/material.hpp"
#include "spdc/poling.hpp"

// Joint spectral amplitudes: pump envelope x phase-matching function on a
// wavelength grid, Schmidt decomposition, purity and heralded-state overlap.
namespace spdc::jsa {

using cplx = std::complex<double>;

// Uniform wavelength axes for signal and idler.  The physical measure is
// angular frequency; every norm, purity and overlap below weights samples by
// the local d(omega) so matrix operations reproduce the continuum integrals.
struct FrequencyGrid {
  std::vector<double> signal_nm;  // ascending, uniform
  std::vector<double> idler_nm;   // ascending, uniform
  double pump_center_nm = 775.0;

  // Windows of +-half_width_nm symmetric about the degenerate wavelength
  // 2 * pump_center.
  static FrequencyGrid centered(double pump_center_nm = 775.0, double half_width_nm = 4.0,
                                std::size_t points = 512);

  void validate() const;  // throws std::invalid_argument
  bool same_axes(const FrequencyGrid& other, double tol_nm = 1e-9) const;

  // Per-sample angular-frequency measure d(omega) in rad/s.
  std::vector<double> signal_measure() const;
  std::vector<double> idler_measure() const;
};

struct PumpEnvelope {
  enum class Shape { Gaussian, Sech };
  Shape shape = Shape::Gaussian;
  double center_nm = 775.0;
  // Gaussian: intensity-rms width in nm (FWHM = 2 sqrt(2 ln 2) width).
  // Sech: the natural width of sech(d_omega / w) mapped from nm.
  double width_nm = 0.308;
  double gdd_ps2 = 0.0;
  // Optional Taylor phase above second order about the pump center: entry k
  // holds the order-(3+k) coefficient in ps^(3+k); phi += c_n d_omega^n / n!.
  std::vector<double> higher_order_ps;

  void validate() const;
  double fwhm_nm() const;  // intensity FWHM of the shape
};

// Spectral amplitude at the energy-conserving sum frequency.  Zero-phase
// envelopes are real, positive and reach 1 at the pump center.
cplx pump_amplitude(const PumpEnvelope& pump, double omega_sum_rad_s);

// Collinear wavevector mismatch evaluated with full dispersion at every grid
// point, plus the degenerate design value.
struct PhaseMatchMap {
  FrequencyGrid grid;
  Eigen::MatrixXd delta_k;  // rad/m, row = signal index, col = idler index
  double delta_k0 = 0.0;
};
PhaseMatchMap make_phase_match_map(const material::DispersionModel& model,
                                   const material::CollinearProcess& process,
                                   const FrequencyGrid& grid);

// PMF values on the grid.  Layout evaluation samples the exact piecewise
// transform on a dense 1D table (256x oversampled relative to the layout's
// Nyquist spacing) and interpolates; the ideal-profile transform is evaluated
// in closed form at every point.
struct PmfOnGrid {
  FrequencyGrid grid;
  Eigen::MatrixXcd phi;
  std::string source;
  std::uint64_t source_hash = 0;
};
PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::DomainLayout& layout);
PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::NonlinearityTarget& target);

// Longitudinal mode overlap of focused collinear Gaussian beams.  Collecting
// signal and idler into modes of Rayleigh range z_R multiplies the crystal
// integrand by i z_R / (z + i z_R): an amplitude falloff plus the Gouy phase.
// At frequency degeneracy the pump waist cancels out of that factor, so the
// collection focal parameter xi = L / (k w^2) alone fixes z_R = L / (2 xi).
// The weight narrows the effective nonlinearity profile, which broadens the
// phase-matching function and raises the purity-optimal pump width by a few
// percent relative to the plane-wave model.
struct CollectionFocus {
  double xi = 0.0;  // 0 reads as the plane-wave limit

  double rayleigh_m(double length_mm) const;
  void validate() const;  // throws std::invalid_argument on negative xi
};

// Collection focal parameter of the matched 30 mm source geometry (68.5 um
// collection waist at 1550 nm).
inline constexpr double kMatchedCollectionXi = 0.89;

// Weighted piecewise transform of the layout under the focus model; reduces
// exactly to the unweighted overload at xi = 0.  The slowly varying weight is
// expanded linearly across each domain, accurate to ~1e-7 relative for
// domains far shorter than z_R.
PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::DomainLayout& layout,
                       const CollectionFocus& focus);

struct JointSpectrum {
  FrequencyGrid grid;
  Eigen::MatrixXcd amplitude;  // f(signal, idler), normalized to unit L2 norm
  bool normalized = false;
  double leaked_norm = 0.0;  // norm fraction in the outermost grid band
  std::string pump_description;
  std::string pmf_description;
  double gdd_ps2 = 0.0;
  std::uint64_t pmf_hash = 0;
};

// Elementwise pump x PMF, normalized.  Warns on stderr (and records the
// fraction) when more than 1e-6 of the norm sits in the outermost band, the
// symptom of a too-narrow grid.  Throws std::domain_error on an all-zero
// product.
JointSpectrum build_jsa(const PumpEnvelope& pump, const PmfOnGrid& pmf);

// Direct construction from a raw amplitude matrix; entry point for synthetic
// spectra (separable test cases, square-root-of-intensity reconstructions).
JointSpectrum joint_spectrum_from_matrix(FrequencyGrid grid, Eigen::MatrixXcd amplitude);

struct SchmidtSpectrum {
  std::vector<double> weights;  // descending, non-negative, sum 1
  double schmidt_number = 1.0;  // K = 1 / sum w^2
  double purity = 1.0;          // P = sum w^2 = 1/K
};

// Weights from the eigendecomposition of the measure-weighted Gram matrix.
SchmidtSpectrum schmidt(const JointSpectrum& js);

// P = ||G||_F^2 / tr(G)^2 for the Gram matrix G; no eigensolve.
double purity(const JointSpectrum& js);

// trace(rho1 rho2) of the signal-side heralded states (idler traced out),
// evaluated in the Schmidt bases of both spectra.  Grids must share axes.
double heralded_visibility(const JointSpectrum& a, const JointSpectrum& b);

// |f|^2 and its phase-free square root (renormalized).
Eigen::MatrixXd jsi(const JointSpectrum& js);
JointSpectrum sqrt_jsi(const FrequencyGrid& grid, const Eigen::MatrixXd& intensity);

}  // namespace spdc::jsa
