#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

// Aperiodic domain-layout synthesis for Gaussian phase-matching functions and
// exact piecewise-analytic PMF evaluation of arbitrary layouts.
namespace spdc::poling {

using cplx = std::complex<double>;

// Ideal nonlinearity profile the layout should emulate.  The gaussian profile
// is centered at the crystal midpoint and truncated at the facets +-L/2; the
// constant profile is g == 1 on the crystal.
struct NonlinearityTarget {
  enum class Profile { Gaussian, Constant };
  Profile profile = Profile::Gaussian;
  double length_mm = 30.0;
  double sigma_mm = 30.0 / 6.04;  // gaussian only
  double delta_k0 = 0.0;          // design-point mismatch, rad/m

  void validate() const;  // throws std::invalid_argument
};

struct Domain {
  double width_um = 0.0;
  int sign = +1;  // -1 or +1
};

struct DomainLayout {
  std::vector<Domain> domains;
  double start_mm = 0.0;      // left edge of the first domain, crystal centered at 0
  double min_width_um = 0.0;  // minimum width used by the generator
  std::string generator;      // coherence | subcoherence-fixed | subcoherence-variable

  double total_width_um() const;
  std::size_t flips() const;  // number of sign changes
  void validate() const;
};

// Greedy tracking record sampled at domain boundaries.  target holds the
// phase-matched accumulation of the ideal profile scaled to the maximum rate
// a +-1 structure can sustain (2/pi); achieved holds the field the layout
// actually accrues at the design carrier.
struct FieldTrace {
  std::vector<double> z_mm;
  std::vector<cplx> target;
  std::vector<cplx> achieved;

  // max_z |achieved - target| / max_z |target|
  double max_relative_error() const;
};

// A(z) = -i * integral_{-L/2}^{z} g_ideal(z') exp(i dk0 z') dz'.
// Closed form for the constant profile; scaled-error-function closed form for
// the gaussian (the carrier makes naive erf arguments overflow).
cplx target_field(const NonlinearityTarget& target, double z_mm);

// Fixed-width greedy walk with width = one coherence length pi/|dk0|.  Signs
// minimize |A_actual - A_target| at each domain end; ties keep the previous
// sign.  Throws if the coherence length exceeds the crystal.
DomainLayout engineer_coherence_length(const NonlinearityTarget& target,
                                       FieldTrace* trace = nullptr);

// Sub-coherence-length engineering.  Fixed mode: the same greedy walk on
// min_width-wide domains.  Variable mode: domains grow from min_width in
// fixed micro-steps and a boundary is placed as soon as flipping the sign
// would track the target better than extending.
DomainLayout engineer_subcoherence(const NonlinearityTarget& target, double min_width_um,
                                   bool variable_width, FieldTrace* trace = nullptr);

// Exact PMF of a layout: sum over domains of s * integral exp(i dk z) dz with
// each integral in closed form; stable for all dk including dk -> 0.
std::vector<cplx> pmf_from_layout(const DomainLayout& layout, std::span<const double> delta_k);
cplx pmf_from_layout_at(const DomainLayout& layout, double delta_k);

// Transform of the ideal profile evaluated at baseband argument dk - dk0:
// error-function closed form (gaussian) or sinc (constant).
std::vector<cplx> pmf_ideal(const NonlinearityTarget& target, std::span<const double> delta_k);
cplx pmf_ideal_at(const NonlinearityTarget& target, double delta_k);

// Maximum per-length PMF accumulation rate of a two-level structure relative
// to a phase-matched unit nonlinearity.
inline constexpr double kQpmEfficiency = 0.6366197723675814;  // 2/pi

}  // namespace spdc::poling
