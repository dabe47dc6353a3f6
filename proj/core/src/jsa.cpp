#include "spdc/jsa.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "spdc/constants.hpp"
#include "spdc/numerics.hpp"

namespace spdc::jsa {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + step * static_cast<double>(i);
  return v;
}

void check_uniform_ascending(const std::vector<double>& v, const char* name) {
  if (v.size() < 64)
    throw std::invalid_argument(std::string("grid: ") + name + " needs at least 64 samples");
  const double step = v[1] - v[0];
  if (!(step > 0.0)) throw std::invalid_argument(std::string("grid: ") + name + " not ascending");
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = v[i] - v[i - 1];
    if (std::abs(d - step) > 1e-9 * step)
      throw std::invalid_argument(std::string("grid: ") + name + " not uniform");
  }
}

std::vector<double> measure_of(const std::vector<double>& nm) {
  // d(omega) = 2 pi c / lambda^2 * d(lambda), per sample.
  const double step_m = (nm[1] - nm[0]) * 1e-9;
  std::vector<double> w(nm.size());
  for (std::size_t i = 0; i < nm.size(); ++i) {
    const double lam = nm[i] * 1e-9;
    w[i] = kTwoPi * kSpeedOfLight / (lam * lam) * step_m;
  }
  return w;
}

// Measure-weighted amplitude: continuum inner products become plain matrix
// algebra on this object.
Eigen::MatrixXcd weighted_amplitude(const JointSpectrum& js) {
  const auto ws = js.grid.signal_measure();
  const auto wi = js.grid.idler_measure();
  Eigen::MatrixXcd a = js.amplitude;
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) *= std::sqrt(ws[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) *= std::sqrt(wi[static_cast<std::size_t>(j)]);
  return a;
}

void require_finite(const JointSpectrum& js) {
  if (!js.amplitude.allFinite())
    throw std::invalid_argument("joint spectrum contains non-finite entries");
}

double band_fraction(const Eigen::MatrixXcd& weighted) {
  const Eigen::Index n = weighted.rows(), m = weighted.cols();
  double band = weighted.row(0).squaredNorm() + weighted.row(n - 1).squaredNorm();
  band += weighted.block(1, 0, n - 2, 1).squaredNorm();
  band += weighted.block(1, m - 1, n - 2, 1).squaredNorm();
  return band / weighted.squaredNorm();
}

JointSpectrum finalize(JointSpectrum js) {
  js.grid.validate();
  if (js.amplitude.rows() != static_cast<Eigen::Index>(js.grid.signal_nm.size()) ||
      js.amplitude.cols() != static_cast<Eigen::Index>(js.grid.idler_nm.size()))
    throw std::invalid_argument("joint spectrum: matrix shape does not match the grid");
  require_finite(js);
  const auto a = weighted_amplitude(js);
  const double norm = a.squaredNorm();
  if (!(norm > 0.0)) throw std::domain_error("joint spectrum: zero norm, nothing to normalize");
  js.amplitude /= std::sqrt(norm);
  js.normalized = true;
  js.leaked_norm = band_fraction(a);
  return js;
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  std::uint64_t h = seed ^ num::fnv1a64(std::span<const unsigned char>(
                               bytes, values.size() * sizeof(double)));
  return h;
}

}  // namespace

FrequencyGrid FrequencyGrid::centered(double pump_center_nm, double half_width_nm,
                                      std::size_t points) {
  FrequencyGrid g;
  g.pump_center_nm = pump_center_nm;
  const double center = 2.0 * pump_center_nm;
  g.signal_nm = linspace(center - half_width_nm, center + half_width_nm, points);
  g.idler_nm = g.signal_nm;
  g.validate();
  return g;
}

void FrequencyGrid::validate() const {
  if (!(pump_center_nm > 0.0)) throw std::invalid_argument("grid: pump center must be positive");
  check_uniform_ascending(signal_nm, "signal axis");
  check_uniform_ascending(idler_nm, "idler axis");
}

bool FrequencyGrid::same_axes(const FrequencyGrid& other, double tol_nm) const {
  if (signal_nm.size() != other.signal_nm.size() || idler_nm.size() != other.idler_nm.size())
    return false;
  if (std::abs(pump_center_nm - other.pump_center_nm) > tol_nm) return false;
  for (std::size_t i = 0; i < signal_nm.size(); ++i)
    if (std::abs(signal_nm[i] - other.signal_nm[i]) > tol_nm) return false;
  for (std::size_t i = 0; i < idler_nm.size(); ++i)
    if (std::abs(idler_nm[i] - other.idler_nm[i]) > tol_nm) return false;
  return true;
}

std::vector<double> FrequencyGrid::signal_measure() const { return measure_of(signal_nm); }
std::vector<double> FrequencyGrid::idler_measure() const { return measure_of(idler_nm); }

void PumpEnvelope::validate() const {
  if (!(width_nm > 0.0)) throw std::invalid_argument("pump: width must be positive");
  if (!(center_nm > 0.0)) throw std::invalid_argument("pump: center must be positive");
}

double PumpEnvelope::fwhm_nm() const {
  if (shape == Shape::Gaussian) return kGaussianFwhm * width_nm;
  // sech^2 falls to 1/2 at acosh(sqrt 2) natural widths.
  return 2.0 * 0.8813735870195430 * width_nm;
}

cplx pump_amplitude(const PumpEnvelope& pump, double omega_sum_rad_s) {
  pump.validate();
  const double lam_p = pump.center_nm * 1e-9;
  const double omega_p = kTwoPi * kSpeedOfLight / lam_p;
  // Wavelength widths map linearly onto angular frequency at the carrier.
  const double width_omega = pump.width_nm * 1e-9 * kTwoPi * kSpeedOfLight / (lam_p * lam_p);
  const double d = omega_sum_rad_s - omega_p;

  double amp;
  if (pump.shape == PumpEnvelope::Shape::Gaussian)
    amp = std::exp(-d * d / (4.0 * width_omega * width_omega));
  else
    amp = 1.0 / std::cosh(d / width_omega);

  double phase = 0.5 * (pump.gdd_ps2 * 1e-24) * d * d;
  double power = d * d * d;
  double factorial = 6.0;  // 3!
  double unit = 1e-36;     // ps^3 -> s^3
  double order = 3.0;
  for (double coeff : pump.higher_order_ps) {
    phase += coeff * unit * power / factorial;
    order += 1.0;
    power *= d;
    factorial *= order;
    unit *= 1e-12;
  }
  return std::polar(amp, phase);
}

PhaseMatchMap make_phase_match_map(const material::DispersionModel& model,
                                   const material::CollinearProcess& process,
                                   const FrequencyGrid& grid) {
  grid.validate();
  process.validate();
  PhaseMatchMap map;
  map.grid = grid;
  map.delta_k0 = material::degenerate_mismatch(model, process);

  const std::size_t ns = grid.signal_nm.size(), ni = grid.idler_nm.size();
  std::vector<double> k_signal(ns), omega_signal(ns), k_idler(ni), omega_idler(ni);
  for (std::size_t i = 0; i < ns; ++i) {
    const double lam = grid.signal_nm[i] * 1e-9;
    omega_signal[i] = kTwoPi * kSpeedOfLight / lam;
    k_signal[i] = material::refractive_index(model, process.signal_axis, grid.signal_nm[i]) *
                  omega_signal[i] / kSpeedOfLight;
  }
  for (std::size_t j = 0; j < ni; ++j) {
    const double lam = grid.idler_nm[j] * 1e-9;
    omega_idler[j] = kTwoPi * kSpeedOfLight / lam;
    k_idler[j] = material::refractive_index(model, process.idler_axis, grid.idler_nm[j]) *
                 omega_idler[j] / kSpeedOfLight;
  }

  map.delta_k.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ni));
  for (std::size_t j = 0; j < ni; ++j) {
    for (std::size_t i = 0; i < ns; ++i) {
      const double omega_sum = omega_signal[i] + omega_idler[j];
      const double lam_p_nm = kTwoPi * kSpeedOfLight / omega_sum * 1e9;
      const double k_pump = material::refractive_index(model, process.pump_axis, lam_p_nm) *
                            omega_sum / kSpeedOfLight;
      map.delta_k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          k_pump - k_signal[i] - k_idler[j];
    }
  }
  return map;
}

PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::DomainLayout& layout) {
  layout.validate();
  PmfOnGrid out;
  out.grid = map.grid;
  out.source = layout.generator.empty() ? "layout" : layout.generator;

  std::vector<double> fingerprint;
  fingerprint.reserve(2 * layout.domains.size() + 1);
  fingerprint.push_back(layout.start_mm);
  for (const auto& d : layout.domains) {
    fingerprint.push_back(d.width_um);
    fingerprint.push_back(static_cast<double>(d.sign));
  }
  out.source_hash = hash_doubles(fingerprint, 0x9e3779b97f4a7c15ULL);

  const Eigen::Index rows = map.delta_k.rows(), cols = map.delta_k.cols();
  const std::size_t n_points = static_cast<std::size_t>(map.delta_k.size());

  const double z0 = layout.start_mm * 1e-3;
  const double z1 = z0 + layout.total_width_um() * 1e-6;
  const double z_extent = std::max(std::abs(z0), std::abs(z1));
  const double table_step = kPi / z_extent / 256.0;

  const double dk_lo = map.delta_k.minCoeff() - 2.0 * table_step;
  const double dk_hi = map.delta_k.maxCoeff() + 2.0 * table_step;
  const auto table_size =
      static_cast<std::size_t>(std::ceil((dk_hi - dk_lo) / table_step)) + 4;

  out.phi.resize(rows, cols);
  const std::size_t direct_cost = n_points * layout.domains.size();
  const std::size_t table_cost = table_size * layout.domains.size() + 8 * n_points;
  if (direct_cost <= table_cost) {
    const auto values = poling::pmf_from_layout(
        layout, std::span<const double>(map.delta_k.data(), n_points));
    std::copy(values.begin(), values.end(), out.phi.data());
    return out;
  }

  std::vector<double> table_dk(table_size);
  for (std::size_t t = 0; t < table_size; ++t)
    table_dk[t] = dk_lo + table_step * static_cast<double>(t);
  const auto table = poling::pmf_from_layout(layout, table_dk);

  // Catmull-Rom through the four neighbouring table samples; the 256x
  // oversampling keeps the interpolation error near 1e-10 relative.
  const double* dk_ptr = map.delta_k.data();
  cplx* phi_ptr = out.phi.data();
  for (std::size_t p = 0; p < n_points; ++p) {
    const double t = (dk_ptr[p] - dk_lo) / table_step;
    const auto i1 = std::clamp(static_cast<std::ptrdiff_t>(std::floor(t)),
                               static_cast<std::ptrdiff_t>(1),
                               static_cast<std::ptrdiff_t>(table_size) - 3);
    const double s = t - static_cast<double>(i1);
    const cplx p0 = table[static_cast<std::size_t>(i1 - 1)];
    const cplx p1 = table[static_cast<std::size_t>(i1)];
    const cplx p2 = table[static_cast<std::size_t>(i1 + 1)];
    const cplx p3 = table[static_cast<std::size_t>(i1 + 2)];
    phi_ptr[p] = 0.5 * (2.0 * p1 + s * ((p2 - p0) +
                                        s * ((2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) +
                                             s * (3.0 * (p1 - p2) + p3 - p0))));
  }
  return out;
}

double CollectionFocus::rayleigh_m(double length_mm) const {
  if (!(xi > 0.0)) throw std::domain_error("focus: plane-wave limit has no Rayleigh range");
  return length_mm * 1e-3 / (2.0 * xi);
}

void CollectionFocus::validate() const {
  if (xi < 0.0 || !std::isfinite(xi))
    throw std::invalid_argument("focus: focal parameter must be finite and non-negative");
}

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

// (sin x - x cos x) / x^2, the odd companion of sinc in the first-moment
// integral over a domain.
double sinc_moment(double x) {
  if (std::abs(x) < 1e-3) {
    const double x2 = x * x;
    return x * (1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0);
  }
  return (std::sin(x) - x * std::cos(x)) / (x * x);
}

}  // namespace

PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::DomainLayout& layout,
                       const CollectionFocus& focus) {
  focus.validate();
  if (focus.xi == 0.0) return evaluate_pmf(map, layout);
  layout.validate();

  PmfOnGrid out;
  out.grid = map.grid;
  out.source = (layout.generator.empty() ? "layout" : layout.generator) + "+focused";

  std::vector<double> fingerprint;
  fingerprint.reserve(2 * layout.domains.size() + 2);
  fingerprint.push_back(layout.start_mm);
  fingerprint.push_back(focus.xi);
  for (const auto& d : layout.domains) {
    fingerprint.push_back(d.width_um);
    fingerprint.push_back(static_cast<double>(d.sign));
  }
  out.source_hash = hash_doubles(fingerprint, 0x9e3779b97f4a7c15ULL);

  const std::size_t nd = layout.domains.size();
  const double z_r = focus.rayleigh_m(layout.total_width_um() * 1e-3);

  // Per-domain geometry and weight values; the weight is frequency
  // independent so all of this is hoisted out of the grid loop.
  std::vector<double> width_m(nd), half_m(nd), sign(nd);
  std::vector<cplx> w_mid(nd), w_slope(nd);
  std::vector<std::size_t> width_idx(nd);
  std::vector<double> distinct_w;
  {
    double z = layout.start_mm * 1e-3;
    for (std::size_t j = 0; j < nd; ++j) {
      const double w = layout.domains[j].width_um * 1e-6;
      width_m[j] = w;
      half_m[j] = 0.5 * w;
      sign[j] = static_cast<double>(layout.domains[j].sign);
      const double zm = z + 0.5 * w;
      const cplx denom(zm, z_r);
      w_mid[j] = cplx(0.0, z_r) / denom;
      w_slope[j] = -cplx(0.0, z_r) / (denom * denom);
      z += w;

      std::size_t idx = distinct_w.size();
      for (std::size_t t = 0; t < distinct_w.size(); ++t)
        if (distinct_w[t] == w) {
          idx = t;
          break;
        }
      if (idx == distinct_w.size()) distinct_w.push_back(w);
      width_idx[j] = idx;
    }
  }

  const std::size_t nw = distinct_w.size();
  std::vector<cplx> rot_half(nw);
  std::vector<double> snc(nw), moment(nw);

  const std::size_t n_points = static_cast<std::size_t>(map.delta_k.size());
  out.phi.resize(map.delta_k.rows(), map.delta_k.cols());
  const double* dk_ptr = map.delta_k.data();
  cplx* phi_ptr = out.phi.data();
  const double z_start = layout.start_mm * 1e-3;

  for (std::size_t p = 0; p < n_points; ++p) {
    const double dk = dk_ptr[p];
    for (std::size_t t = 0; t < nw; ++t) {
      const double x = 0.5 * dk * distinct_w[t];
      rot_half[t] = std::polar(1.0, x);
      snc[t] = sinc(x);
      moment[t] = sinc_moment(x);
    }
    // Phasor at the running domain midpoint, advanced by half a width on
    // entry and exit; renormalized periodically against drift.
    cplx ph = std::polar(1.0, dk * z_start);
    cplx acc(0.0, 0.0);
    for (std::size_t j = 0; j < nd; ++j) {
      const std::size_t t = width_idx[j];
      ph *= rot_half[t];
      const cplx base = w_mid[j] * (width_m[j] * snc[t]);
      const cplx first = w_slope[j] * cplx(0.0, half_m[j] * width_m[j] * moment[t]);
      acc += sign[j] * ((base + first) * ph);
      ph *= rot_half[t];
      if ((j & 4095u) == 4095u) ph /= std::abs(ph);
    }
    phi_ptr[p] = acc;
  }
  return out;
}

PmfOnGrid evaluate_pmf(const PhaseMatchMap& map, const poling::NonlinearityTarget& target) {
  target.validate();
  PmfOnGrid out;
  out.grid = map.grid;
  out.source = target.profile == poling::NonlinearityTarget::Profile::Gaussian
                   ? "ideal-gaussian"
                   : "ideal-constant";
  const double params[4] = {target.length_mm, target.sigma_mm, target.delta_k0,
                            static_cast<double>(target.profile)};
  out.source_hash = hash_doubles(params, 0x517cc1b727220a95ULL);

  const auto values = poling::pmf_ideal(
      target, std::span<const double>(map.delta_k.data(),
                                      static_cast<std::size_t>(map.delta_k.size())));
  out.phi.resize(map.delta_k.rows(), map.delta_k.cols());
  std::copy(values.begin(), values.end(), out.phi.data());
  return out;
}

JointSpectrum build_jsa(const PumpEnvelope& pump, const PmfOnGrid& pmf) {
  pump.validate();
  const auto& grid = pmf.grid;
  grid.validate();

  const std::size_t ns = grid.signal_nm.size(), ni = grid.idler_nm.size();
  std::vector<double> omega_signal(ns), omega_idler(ni);
  for (std::size_t i = 0; i < ns; ++i)
    omega_signal[i] = kTwoPi * kSpeedOfLight / (grid.signal_nm[i] * 1e-9);
  for (std::size_t j = 0; j < ni; ++j)
    omega_idler[j] = kTwoPi * kSpeedOfLight / (grid.idler_nm[j] * 1e-9);

  JointSpectrum js;
  js.grid = grid;
  js.amplitude.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ni));
  for (std::size_t j = 0; j < ni; ++j)
    for (std::size_t i = 0; i < ns; ++i)
      js.amplitude(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          pump_amplitude(pump, omega_signal[i] + omega_idler[j]) *
          pmf.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

  std::ostringstream pd;
  pd << (pump.shape == PumpEnvelope::Shape::Gaussian ? "gaussian" : "sech") << " width "
     << pump.width_nm << " nm";
  js.pump_description = pd.str();
  js.pmf_description = pmf.source;
  js.gdd_ps2 = pump.gdd_ps2;
  js.pmf_hash = pmf.source_hash;

  js = finalize(std::move(js));
  if (js.leaked_norm > 1e-6) {
    // One line per PMF source and resolution; sweeps rebuild the pump
    // thousands of times on the same marginal grid.
    static std::mutex warn_mutex;
    static std::set<std::uint64_t> warned;
    const std::uint64_t key =
        js.pmf_hash ^ (static_cast<std::uint64_t>(js.amplitude.rows()) << 40) ^
        static_cast<std::uint64_t>(js.amplitude.cols());
    std::lock_guard<std::mutex> lock(warn_mutex);
    if (warned.insert(key).second)
      std::cerr << "build_jsa: grid too narrow, leaked norm fraction " << js.leaked_norm
                << "\n";
  }
  return js;
}

JointSpectrum joint_spectrum_from_matrix(FrequencyGrid grid, Eigen::MatrixXcd amplitude) {
  JointSpectrum js;
  js.grid = std::move(grid);
  js.amplitude = std::move(amplitude);
  js.pump_description = "matrix";
  js.pmf_description = "matrix";
  return finalize(std::move(js));
}

namespace {

Eigen::MatrixXcd gram(const JointSpectrum& js) {
  const Eigen::MatrixXcd a = weighted_amplitude(js);
  return a.adjoint() * a;
}

}  // namespace

SchmidtSpectrum schmidt(const JointSpectrum& js) {
  require_finite(js);
  const Eigen::MatrixXcd g = gram(js);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g);
  if (es.info() != Eigen::Success) throw std::runtime_error("schmidt: eigensolver failed");

  std::vector<double> w(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    w[static_cast<std::size_t>(i)] = std::max(0.0, es.eigenvalues()(i));
  std::sort(w.begin(), w.end(), std::greater<>());
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw std::domain_error("schmidt: zero spectrum");
  for (double& v : w) v /= total;

  SchmidtSpectrum s;
  s.weights = std::move(w);
  double p = 0.0;
  for (double v : s.weights) p += v * v;
  s.purity = p;
  s.schmidt_number = 1.0 / p;
  return s;
}

double purity(const JointSpectrum& js) {
  require_finite(js);
  const Eigen::MatrixXcd g = gram(js);
  const double tr = g.trace().real();
  return g.squaredNorm() / (tr * tr);
}

double heralded_visibility(const JointSpectrum& a, const JointSpectrum& b) {
  require_finite(a);
  require_finite(b);
  if (!a.grid.same_axes(b.grid))
    throw std::invalid_argument("heralded_visibility: spectra live on different grids");

  const Eigen::MatrixXcd wa = weighted_amplitude(a);
  const Eigen::MatrixXcd wb = weighted_amplitude(b);
  // Heralded signal states: trace over the idler axis.
  const Eigen::MatrixXcd rho_a = wa * wa.adjoint() / wa.squaredNorm();
  const Eigen::MatrixXcd rho_b = wb * wb.adjoint() / wb.squaredNorm();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ea(rho_a), eb(rho_b);
  if (ea.info() != Eigen::Success || eb.info() != Eigen::Success)
    throw std::runtime_error("heralded_visibility: eigensolver failed");

  const Eigen::MatrixXd overlap =
      (ea.eigenvectors().adjoint() * eb.eigenvectors()).cwiseAbs2();
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd lb = eb.eigenvalues().cwiseMax(0.0);
  return la.dot(overlap * lb);
}

Eigen::MatrixXd jsi(const JointSpectrum& js) {
  require_finite(js);
  return js.amplitude.cwiseAbs2();
}

JointSpectrum sqrt_jsi(const FrequencyGrid& grid, const Eigen::MatrixXd& intensity) {
  if ((intensity.array() < 0.0).any())
    throw std::invalid_argument("sqrt_jsi: negative intensities, clamp before calling");
  return joint_spectrum_from_matrix(grid, intensity.cwiseSqrt().cast<cplx>());
}

}  // namespace spdc::jsa
