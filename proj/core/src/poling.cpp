#include "spdc/poling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdc/constants.hpp"
#include "spdc/numerics.hpp"

namespace spdc::poling {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

// integral_a^b exp(i k z) dz, stable for all k including k == 0.
cplx segment_integral(double k, double a, double b) {
  const double w = b - a;
  const double mid = 0.5 * (a + b);
  const cplx phase(std::cos(k * mid), std::sin(k * mid));
  return w * sinc(0.5 * k * w) * phase;
}

// integral_{-L/2}^{z} g_env dz' for the bare envelope (no carrier).
double envelope_integral(const NonlinearityTarget& t, double z_m) {
  const double half = 0.5 * t.length_mm * 1e-3;
  if (t.profile == NonlinearityTarget::Profile::Constant) return z_m + half;
  const double s = t.sigma_mm * 1e-3;
  const double root2 = std::sqrt(2.0);
  return s * std::sqrt(kPi / 2.0) * (std::erf(z_m / (s * root2)) + std::erf(half / (s * root2)));
}

struct GreedyState {
  cplx achieved{0.0, 0.0};
  cplx carrier{1.0, 0.0};  // exp(i dk0 z) at the current boundary
  int renorm_countdown = 4096;

  void advance(const cplx& step_rot) {
    carrier *= step_rot;
    if (--renorm_countdown == 0) {
      carrier /= std::abs(carrier);
      renorm_countdown = 4096;
    }
  }
};

}  // namespace

void NonlinearityTarget::validate() const {
  if (!(length_mm > 0.0)) throw std::invalid_argument("target: length must be positive");
  if (profile == Profile::Gaussian && !(sigma_mm > 0.0))
    throw std::invalid_argument("target: gaussian width must be positive");
}

double DomainLayout::total_width_um() const {
  double sum = 0.0;
  for (const auto& d : domains) sum += d.width_um;
  return sum;
}

std::size_t DomainLayout::flips() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < domains.size(); ++i)
    if (domains[i].sign != domains[i - 1].sign) ++n;
  return n;
}

void DomainLayout::validate() const {
  if (domains.empty()) throw std::invalid_argument("layout: no domains");
  for (const auto& d : domains) {
    if (!(d.width_um > 0.0)) throw std::invalid_argument("layout: non-positive domain width");
    if (d.sign != 1 && d.sign != -1) throw std::invalid_argument("layout: sign must be +-1");
    if (min_width_um > 0.0 && d.width_um < min_width_um * (1.0 - 1e-9))
      throw std::invalid_argument("layout: domain narrower than the declared minimum");
  }
}

double FieldTrace::max_relative_error() const {
  double max_err = 0.0, max_target = 0.0;
  for (std::size_t i = 0; i < z_mm.size(); ++i) {
    max_err = std::max(max_err, std::abs(achieved[i] - target[i]));
    max_target = std::max(max_target, std::abs(target[i]));
  }
  return max_target > 0.0 ? max_err / max_target : 0.0;
}

cplx target_field(const NonlinearityTarget& target, double z_mm) {
  target.validate();
  const double L = target.length_mm * 1e-3;
  const double half = 0.5 * L;
  const double z = z_mm * 1e-3;
  if (z < -half * (1.0 + 1e-12) - 1e-15 || z > half * (1.0 + 1e-12) + 1e-15)
    throw std::invalid_argument("target_field: z outside the crystal");
  const cplx minus_i(0.0, -1.0);
  if (target.profile == NonlinearityTarget::Profile::Constant)
    return minus_i * segment_integral(target.delta_k0, -half, std::clamp(z, -half, half));
  const double s = target.sigma_mm * 1e-3;
  const double root2 = std::sqrt(2.0);
  const double y = -target.delta_k0 * s / root2;
  const cplx upper = num::erf_scaled(std::clamp(z, -half, half) / (s * root2), y);
  const cplx lower = num::erf_scaled(-half / (s * root2), y);
  return minus_i * s * std::sqrt(kPi / 2.0) * (upper - lower);
}

namespace {

// Shared fixed-width greedy walk.  The tracked target is the phase-matched
// accumulation of the envelope scaled by the peak rate 2/pi a +-1 structure
// sustains, phase-anchored to the increment a +1 domain at the lattice start
// would produce; without the anchor the quantized increment directions of a
// width-w lattice cannot follow the target.
DomainLayout greedy_fixed_width(const NonlinearityTarget& target, double width_m,
                                const char* generator, double min_width_um,
                                FieldTrace* trace) {
  const double L = target.length_mm * 1e-3;
  const double dk0 = target.delta_k0;
  const auto n_domains = static_cast<std::size_t>(std::floor(L / width_m + 1e-9));
  if (n_domains < 1)
    throw std::invalid_argument("engineer: domain width exceeds the crystal length");
  const double start = -0.5 * static_cast<double>(n_domains) * width_m;

  const cplx minus_i(0.0, -1.0);
  const cplx step_rot(std::cos(dk0 * width_m), std::sin(dk0 * width_m));
  // -i * integral_0^w exp(i dk0 u) du; multiply by exp(i dk0 a) per domain.
  const cplx base = minus_i * segment_integral(dk0, 0.0, width_m);
  cplx anchor = cplx(std::cos(dk0 * start), std::sin(dk0 * start)) * base;
  anchor /= std::abs(anchor);

  DomainLayout layout;
  layout.generator = generator;
  layout.min_width_um = min_width_um;
  layout.start_mm = start * 1e3;
  layout.domains.reserve(n_domains);

  GreedyState state;
  state.carrier = cplx(std::cos(dk0 * start), std::sin(dk0 * start));
  if (trace) {
    trace->z_mm.push_back(start * 1e3);
    trace->target.push_back({0.0, 0.0});
    trace->achieved.push_back({0.0, 0.0});
  }

  int prev_sign = +1;
  for (std::size_t d = 0; d < n_domains; ++d) {
    const double b = start + static_cast<double>(d + 1) * width_m;
    const cplx goal = anchor * (kQpmEfficiency * envelope_integral(target, b));
    const cplx increment = state.carrier * base;
    // |A + s*inc - goal| minimized: the sign of Re[(A-goal) conj(inc)] decides.
    const double discriminant = ((state.achieved - goal) * std::conj(increment)).real();
    int sign = prev_sign;
    if (discriminant < 0.0)
      sign = +1;
    else if (discriminant > 0.0)
      sign = -1;
    state.achieved += static_cast<double>(sign) * increment;
    state.advance(step_rot);
    layout.domains.push_back({width_m * 1e6, sign});
    prev_sign = sign;
    if (trace) {
      trace->z_mm.push_back(b * 1e3);
      trace->target.push_back(goal);
      trace->achieved.push_back(state.achieved);
    }
  }
  return layout;
}

}  // namespace

DomainLayout engineer_coherence_length(const NonlinearityTarget& target, FieldTrace* trace) {
  target.validate();
  if (target.delta_k0 == 0.0)
    throw std::invalid_argument("engineer_coherence_length: delta_k0 must be nonzero");
  const double lc = kPi / std::abs(target.delta_k0);
  return greedy_fixed_width(target, lc, "coherence", lc * 1e6, trace);
}

DomainLayout engineer_subcoherence(const NonlinearityTarget& target, double min_width_um,
                                   bool variable_width, FieldTrace* trace) {
  target.validate();
  if (!(min_width_um > 0.0)) throw std::invalid_argument("engineer_subcoherence: min_width <= 0");
  if (target.delta_k0 == 0.0)
    throw std::invalid_argument("engineer_subcoherence: delta_k0 must be nonzero");
  const double lc_um = kPi / std::abs(target.delta_k0) * 1e6;
  if (min_width_um > lc_um * (1.0 + 1e-9))
    throw std::invalid_argument("engineer_subcoherence: min_width must not exceed the coherence length");

  if (!variable_width)
    return greedy_fixed_width(target, min_width_um * 1e-6, "subcoherence-fixed", min_width_um,
                              trace);

  // Variable mode: march in micro-steps of min_width/16; place a boundary as
  // soon as flipping tracks the target better, never closer than min_width to
  // the previous boundary or the crystal end.
  constexpr int kStepsPerMinWidth = 16;
  const double L = target.length_mm * 1e-3;
  const double dk0 = target.delta_k0;
  const double step = min_width_um * 1e-6 / kStepsPerMinWidth;
  const auto n_steps = static_cast<std::size_t>(std::floor(L / step + 1e-9));
  const double start = -0.5 * L;

  const cplx minus_i(0.0, -1.0);
  const cplx step_rot(std::cos(dk0 * step), std::sin(dk0 * step));
  const cplx base = minus_i * segment_integral(dk0, 0.0, step);
  cplx anchor = cplx(std::cos(dk0 * start), std::sin(dk0 * start)) *
                (minus_i * segment_integral(dk0, 0.0, min_width_um * 1e-6));
  anchor /= std::abs(anchor);

  DomainLayout layout;
  layout.generator = "subcoherence-variable";
  layout.min_width_um = min_width_um;
  layout.start_mm = start * 1e3;

  GreedyState state;
  state.carrier = cplx(std::cos(dk0 * start), std::sin(dk0 * start));
  if (trace) {
    trace->z_mm.push_back(start * 1e3);
    trace->target.push_back({0.0, 0.0});
    trace->achieved.push_back({0.0, 0.0});
  }

  int sign = +1;
  std::size_t domain_start = 0;
  const auto record = [&](std::size_t k) {
    if (!trace) return;
    const double z = start + static_cast<double>(k) * step;
    trace->z_mm.push_back(z * 1e3);
    trace->target.push_back(anchor * (kQpmEfficiency * envelope_integral(target, z)));
    trace->achieved.push_back(state.achieved);
  };

  for (std::size_t k = 0; k < n_steps; ++k) {
    const double z_next = start + static_cast<double>(k + 1) * step;
    const cplx goal = anchor * (kQpmEfficiency * envelope_integral(target, z_next));
    const cplx increment = state.carrier * base;
    const bool can_flip = (k - domain_start) >= static_cast<std::size_t>(kStepsPerMinWidth) &&
                          (n_steps - k) >= static_cast<std::size_t>(kStepsPerMinWidth);
    const double discriminant = ((state.achieved - goal) * std::conj(increment)).real();
    const bool flip_better = can_flip && (static_cast<double>(sign) * discriminant > 0.0);
    if (flip_better) {
      layout.domains.push_back(
          {static_cast<double>(k - domain_start) * step * 1e6, sign});
      record(k);
      sign = -sign;
      domain_start = k;
    }
    state.achieved += static_cast<double>(sign) * increment;
    state.advance(step_rot);
  }
  layout.domains.push_back({static_cast<double>(n_steps - domain_start) * step * 1e6, sign});
  record(n_steps);
  return layout;
}

std::vector<cplx> pmf_from_layout(const DomainLayout& layout, std::span<const double> delta_k) {
  layout.validate();
  const std::size_t n = layout.domains.size();

  // Index domains by distinct width so each dk needs one exp per width.
  std::vector<double> widths_m;
  std::vector<std::uint32_t> width_index(n);
  std::vector<double> signs(n);
  for (std::size_t d = 0; d < n; ++d) {
    const double w = layout.domains[d].width_um * 1e-6;
    std::size_t j = 0;
    for (; j < widths_m.size(); ++j)
      if (widths_m[j] == w) break;
    if (j == widths_m.size()) widths_m.push_back(w);
    width_index[d] = static_cast<std::uint32_t>(j);
    signs[d] = static_cast<double>(layout.domains[d].sign);
  }
  const double start = layout.start_mm * 1e-3;

  std::vector<cplx> out(delta_k.size());
  std::vector<cplx> full(widths_m.size());
  std::vector<cplx> half_times_sinc(widths_m.size());
  for (std::size_t i = 0; i < delta_k.size(); ++i) {
    const double dk = delta_k[i];
    for (std::size_t j = 0; j < widths_m.size(); ++j) {
      const double w = widths_m[j];
      full[j] = cplx(std::cos(dk * w), std::sin(dk * w));
      half_times_sinc[j] =
          cplx(std::cos(0.5 * dk * w), std::sin(0.5 * dk * w)) * (w * sinc(0.5 * dk * w));
    }
    cplx acc(0.0, 0.0);
    cplx edge(std::cos(dk * start), std::sin(dk * start));
    int renorm = 4096;
    if (widths_m.size() == 1) {
      // Uniform width: hoist the tables out of the domain loop.
      const cplx rot = full[0];
      const cplx mid = half_times_sinc[0];
      cplx inner(0.0, 0.0);
      for (std::size_t d = 0; d < n; ++d) {
        inner += signs[d] * edge;
        edge *= rot;
        if (--renorm == 0) {
          edge /= std::abs(edge);
          renorm = 4096;
        }
      }
      acc = inner * mid;
    } else {
      for (std::size_t d = 0; d < n; ++d) {
        const std::uint32_t j = width_index[d];
        acc += signs[d] * edge * half_times_sinc[j];
        edge *= full[j];
        if (--renorm == 0) {
          edge /= std::abs(edge);
          renorm = 4096;
        }
      }
    }
    out[i] = acc;
  }
  return out;
}

cplx pmf_from_layout_at(const DomainLayout& layout, double delta_k) {
  const double dk[1] = {delta_k};
  return pmf_from_layout(layout, dk)[0];
}

std::vector<cplx> pmf_ideal(const NonlinearityTarget& target, std::span<const double> delta_k) {
  target.validate();
  const double L = target.length_mm * 1e-3;
  std::vector<cplx> out(delta_k.size());
  if (target.profile == NonlinearityTarget::Profile::Constant) {
    for (std::size_t i = 0; i < delta_k.size(); ++i) {
      const double kappa = delta_k[i] - target.delta_k0;
      out[i] = cplx(L * sinc(0.5 * kappa * L), 0.0);
    }
    return out;
  }
  const double s = target.sigma_mm * 1e-3;
  const double root2 = std::sqrt(2.0);
  const double u = 0.5 * L / (s * root2);
  for (std::size_t i = 0; i < delta_k.size(); ++i) {
    const double kappa = delta_k[i] - target.delta_k0;
    // Even real transform: 2 Re[e^{-y^2} erf(u + iy)] with y = -kappa sigma/sqrt(2).
    const cplx e = num::erf_scaled(u, -kappa * s / root2);
    out[i] = cplx(s * std::sqrt(kTwoPi) * e.real(), 0.0);
  }
  return out;
}

cplx pmf_ideal_at(const NonlinearityTarget& target, double delta_k) {
  const double dk[1] = {delta_k};
  return pmf_ideal(target, dk)[0];
}

}  // namespace spdc::poling
