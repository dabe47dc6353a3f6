#pragma once

namespace spdc {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// Intensity FWHM of a Gaussian = kGaussianFwhm * (intensity rms width).
inline constexpr double kGaussianFwhm = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// Time-bandwidth product of a transform-limited Gaussian pulse (FWHM * FWHM).
inline constexpr double kGaussianTbp = 0.44127098228261135;  // 2 ln 2 / pi

// Convert an angular-frequency detuning at carrier wavelength lambda (m) to a
// wavelength offset and back: |dlambda| = lambda^2/(2 pi c) * |domega|.
inline double omega_from_wavelength_m(double lambda_m) { return kTwoPi * kSpeedOfLight / lambda_m; }
inline double wavelength_m_from_omega(double omega) { return kTwoPi * kSpeedOfLight / omega; }

}  // namespace spdc
