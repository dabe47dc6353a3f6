#include "spdc/material.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spdc/constants.hpp"

namespace spdc::material {

namespace {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

double n_squared(const SellmeierAxis& ax, double lambda_um) {
  const double l2 = lambda_um * lambda_um;
  double v = ax.constant + ax.lambda_sq * l2;
  for (const auto& t : ax.resonances) v += t.strength / (1.0 - t.pole_um2 / l2);
  for (const auto& t : ax.inverse_terms) v += t.strength / (l2 - t.pole_um2);
  return v;
}

void check_window(const DispersionModel& model, double wavelength_nm) {
  if (wavelength_nm < model.validity_lo_nm || wavelength_nm > model.validity_hi_nm) {
    std::ostringstream msg;
    msg << "wavelength " << wavelength_nm << " nm outside dispersion validity window ["
        << model.validity_lo_nm << ", " << model.validity_hi_nm << "] nm of " << model.source;
    throw std::domain_error(msg.str());
  }
}

SellmeierAxis parse_axis(const nlohmann::json& j) {
  SellmeierAxis ax;
  ax.constant = j.value("constant", 0.0);
  ax.lambda_sq = j.value("lambda_sq", 0.0);
  if (j.contains("resonances"))
    for (const auto& t : j.at("resonances"))
      ax.resonances.push_back({t.at("strength").get<double>(), t.at("pole_um2").get<double>()});
  if (j.contains("inverse_terms"))
    for (const auto& t : j.at("inverse_terms"))
      ax.inverse_terms.push_back({t.at("strength").get<double>(), t.at("pole_um2").get<double>()});
  return ax;
}

}  // namespace

const SellmeierAxis& DispersionModel::axis(Axis a) const {
  const auto& slot = axes[static_cast<std::size_t>(a)];
  if (!slot)
    throw std::invalid_argument(std::string("dispersion model '") + source +
                                "' has no coefficients for axis " + axis_name(a));
  return *slot;
}

DispersionModel parse_dispersion_model(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  DispersionModel model;
  model.source = j.at("source").get<std::string>();
  const auto& validity = j.at("validity_nm");
  model.validity_lo_nm = validity.at(0).get<double>();
  model.validity_hi_nm = validity.at(1).get<double>();
  if (!(model.validity_lo_nm < model.validity_hi_nm))
    throw std::invalid_argument("material file: empty validity window");
  const auto& axes = j.at("axes");
  const char* names[3] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i)
    if (axes.contains(names[i]))
      model.axes[static_cast<std::size_t>(i)] = parse_axis(axes.at(names[i]));
  if (!model.axes[0] && !model.axes[1] && !model.axes[2])
    throw std::invalid_argument("material file: no axes defined");
  return model;
}

DispersionModel load_dispersion_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open material file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dispersion_model(buf.str());
}

std::string default_material_path() {
#ifdef SPDC_SOURCE_DATA_DIR
  return std::string(SPDC_SOURCE_DATA_DIR) + "/ktp.json";
#else
  return "data/ktp.json";
#endif
}

double refractive_index(const DispersionModel& model, Axis axis, double wavelength_nm) {
  if (!(wavelength_nm > 0.0)) throw std::invalid_argument("refractive_index: wavelength <= 0");
  check_window(model, wavelength_nm);
  const double n2 = n_squared(model.axis(axis), wavelength_nm * 1e-3);
  if (!(n2 > 0.0))
    throw std::domain_error("refractive_index: n^2 <= 0; coefficients invalid at this wavelength");
  return std::sqrt(n2);
}

namespace {

double dn_dlambda(const DispersionModel& model, Axis axis, double wavelength_nm, double h_nm) {
  return (refractive_index(model, axis, wavelength_nm + h_nm) -
          refractive_index(model, axis, wavelength_nm - h_nm)) /
         (2.0 * h_nm * 1e-9);  // per meter
}

}  // namespace

double group_velocity(const DispersionModel& model, Axis axis, double wavelength_nm,
                      double step_nm) {
  if (!(step_nm > 0.0)) throw std::invalid_argument("group_velocity: step <= 0");
  // Keep the stencil inside the validity window.
  const double margin = std::min(wavelength_nm - model.validity_lo_nm,
                                 model.validity_hi_nm - wavelength_nm);
  double h = std::min(step_nm, 0.5 * margin);
  if (!(h > 0.0)) throw std::domain_error("group_velocity: wavelength at validity boundary");
  const double n = refractive_index(model, axis, wavelength_nm);
  double prev = dn_dlambda(model, axis, wavelength_nm, h);
  double best = prev;
  for (int iter = 0; iter < 20; ++iter) {
    h *= 0.5;
    const double cur = dn_dlambda(model, axis, wavelength_nm, h);
    best = (4.0 * cur - prev) / 3.0;  // Richardson: cancels the O(h^2) term
    const double scale = std::max(std::abs(best), 1e-12);
    if (std::abs(cur - prev) < 1e-6 * scale || h < wavelength_nm * 1e-7) break;
    prev = cur;
  }
  const double ng = n - wavelength_nm * 1e-9 * best;
  return kSpeedOfLight / ng;
}

double group_velocity(const DispersionModel& model, Axis axis, double wavelength_nm) {
  return group_velocity(model, axis, wavelength_nm, wavelength_nm * 1e-3);
}

void CollinearProcess::validate() const {
  if (!(pump_center_nm > 0.0) || !(signal_center_nm > 0.0) || !(idler_center_nm > 0.0))
    throw std::invalid_argument("process centers must be positive");
  const double lhs = 1.0 / pump_center_nm;
  const double rhs = 1.0 / signal_center_nm + 1.0 / idler_center_nm;
  if (std::abs(lhs - rhs) > 1e-9 * lhs)
    throw std::invalid_argument("process centers violate energy conservation 1/lp = 1/ls + 1/li");
}

double phase_mismatch(const DispersionModel& model, const CollinearProcess& process,
                      double omega_s, double omega_i) {
  if (!(omega_s > 0.0) || !(omega_i > 0.0))
    throw std::invalid_argument("phase_mismatch: frequencies must be positive");
  const double omega_p = omega_s + omega_i;
  const double ls = wavelength_m_from_omega(omega_s) * 1e9;
  const double li = wavelength_m_from_omega(omega_i) * 1e9;
  const double lp = wavelength_m_from_omega(omega_p) * 1e9;
  const double np = refractive_index(model, process.pump_axis, lp);
  const double ns = refractive_index(model, process.signal_axis, ls);
  const double ni = refractive_index(model, process.idler_axis, li);
  return (np * omega_p - ns * omega_s - ni * omega_i) / kSpeedOfLight;
}

double degenerate_mismatch(const DispersionModel& model, const CollinearProcess& process) {
  process.validate();
  const double omega_s = omega_from_wavelength_m(process.signal_center_nm * 1e-9);
  const double omega_i = omega_from_wavelength_m(process.idler_center_nm * 1e-9);
  return phase_mismatch(model, process, omega_s, omega_i);
}

double qpm_period_um(double delta_k_rad_per_m) {
  if (delta_k_rad_per_m == 0.0)
    throw std::domain_error("qpm_period: perfect phase matching, no poling needed");
  return kTwoPi / std::abs(delta_k_rad_per_m) * 1e6;
}

double coherence_length_um(double delta_k_rad_per_m) {
  return 0.5 * qpm_period_um(delta_k_rad_per_m);
}

double focal_parameter(double length_mm, double k_rad_per_m, double waist_um) {
  if (!(length_mm > 0.0) || !(k_rad_per_m > 0.0) || !(waist_um > 0.0))
    throw std::invalid_argument("focal_parameter: arguments must be positive");
  const double w = waist_um * 1e-6;
  return length_mm * 1e-3 / (k_rad_per_m * w * w);
}

}  // namespace spdc::material
