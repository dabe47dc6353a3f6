#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

// Crystal dispersion: Sellmeier evaluation per optical axis, collinear phase
// mismatch, quasi-phase-matching period, group velocity and the focal
// parameter.  Wavelengths cross the API in nm, angular frequencies in rad/s,
// wavevector mismatch in rad/m.
namespace spdc::material {

enum class Axis { X = 0, Y = 1, Z = 2 };

// n^2(lambda) = constant
//             + sum strength / (1 - pole_um2 / lambda^2)        (resonances)
//             + sum strength / (lambda^2 - pole_um2)            (inverse form)
//             + lambda_sq * lambda^2,          with lambda in um.
// The two pole conventions cover the published KTP coefficient sets without
// refitting them.
struct SellmeierTerm {
  double strength = 0.0;
  double pole_um2 = 0.0;
};

struct SellmeierAxis {
  double constant = 0.0;
  std::vector<SellmeierTerm> resonances;
  std::vector<SellmeierTerm> inverse_terms;
  double lambda_sq = 0.0;
};

struct DispersionModel {
  std::string source;  // dataset provenance tag, propagated into reports
  std::array<std::optional<SellmeierAxis>, 3> axes;
  double validity_lo_nm = 0.0;
  double validity_hi_nm = 0.0;

  const SellmeierAxis& axis(Axis a) const;  // throws std::invalid_argument if absent
};

// Loads the JSON schema {source, axes:{x|y|z:{...}}, validity_nm:[lo,hi]}.
DispersionModel load_dispersion_model(const std::string& path);
DispersionModel parse_dispersion_model(const std::string& json_text);

// Path of the KTP coefficient file shipped with the source tree.
std::string default_material_path();

// Phase refractive index; throws std::domain_error naming the validity window
// when wavelength_nm falls outside it.
double refractive_index(const DispersionModel& model, Axis axis, double wavelength_nm);

// Group velocity c / (n - lambda dn/dlambda) in m/s.  The derivative uses an
// adaptive central difference with Richardson extrapolation; pass step_nm to
// pin the first step (each halving must change the result by < 1e-6 relative
// before the value is accepted).
double group_velocity(const DispersionModel& model, Axis axis, double wavelength_nm);
double group_velocity(const DispersionModel& model, Axis axis, double wavelength_nm,
                      double step_nm);

// Collinear process geometry.  Centers must satisfy energy conservation
// 1/lambda_p = 1/lambda_s + 1/lambda_i.
struct CollinearProcess {
  Axis pump_axis = Axis::Y;
  Axis signal_axis = Axis::Y;
  Axis idler_axis = Axis::Z;
  double pump_center_nm = 775.0;
  double signal_center_nm = 1550.0;
  double idler_center_nm = 1550.0;

  void validate() const;  // throws std::invalid_argument on violation
};

// Delta k = k_p(omega_s + omega_i) - k_s(omega_s) - k_i(omega_i), rad/m, with
// k_j = n_j omega_j / c evaluated on each photon's axis.
double phase_mismatch(const DispersionModel& model, const CollinearProcess& process,
                      double omega_s, double omega_i);

// Mismatch at the degenerate point of the process (its design carrier).
double degenerate_mismatch(const DispersionModel& model, const CollinearProcess& process);

// First-order quasi-phase-matching period 2*pi/|dk| in um; a domain of half
// that length accrues pi of phase slip.  dk == 0 signals perfect phase
// matching (no poling needed) via std::domain_error.
double qpm_period_um(double delta_k_rad_per_m);
double coherence_length_um(double delta_k_rad_per_m);

// Focal parameter xi = L / (k w^2) for crystal length L (mm), wavevector
// k (rad/m) and beam waist w (um).
double focal_parameter(double length_mm, double k_rad_per_m, double waist_um);

}  // namespace spdc::material
