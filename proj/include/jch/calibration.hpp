#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jch/error.hpp"
#include "jch/ion_chain.hpp"
#include "jch/nelder_mead.hpp"
#include "jch/units.hpp"

namespace jch {

/// Gaussian Raman beam along the chain axis.
struct LaserProfile {
    double peak_rabi = 0.0;         // Omega_0, rad/s
    double waist = 0.0;             // sigma, m; +inf for a flat profile
    double stark_amplitude = 0.0;   // D_0, rad/s
    double beam_center = 0.0;       // m

    double envelope(double z) const
    {
        if (std::isinf(waist)) return 1.0;
        const double x = (z - beam_center) / waist;
        return std::exp(-2.0 * x * x);
    }
    double rabi_at(double z) const { return peak_rabi * envelope(z); }
    double stark_at(double z) const
    {
        const double e = envelope(z);
        return stark_amplitude * e * e;
    }
};

struct SiteParameters {
    Eigen::VectorXd couplings;   // g_i, rad/s
    Eigen::VectorXd detunings;   // Delta_i, rad/s
};

// ---------------------------------------------------------------------------
// Spectrum -> trap fit

struct SpectrumFitOptions {
    int starts = 5;                                      // first is the guess itself
    std::uint64_t seed = 1;
    double target_rms = units::khz_to_angular(0.2);     // convergence target
    double max_rms = units::khz_to_angular(1.0);        // failure threshold
    int max_evaluations = 3000;                          // per start
};

struct SpectrumFit {
    TrapParameters trap;
    ChainGeometry geometry;
    ModeData modes;
    double rms_residual = 0.0;          // rad/s
    bool converged = false;             // rms_residual <= target_rms
    int best_start = 0;
    std::vector<double> history;        // best rms (rad/s) per iteration of the winning start
};

namespace detail {

// Fit coordinates: (wx - top) in kHz, ln(wz / 2pi MHz), 100 q.
inline TrapParameters trap_from_coordinates(const Eigen::VectorXd& p, const TrapParameters& base, double top,
                                            bool fit_quartic)
{
    TrapParameters t = base;
    t.transverse_frequency = top + units::khz_to_angular(p[0]);
    t.axial_frequency = units::mhz_to_angular(std::exp(p[1]));
    if (fit_quartic) t.axial_quartic = p[2] / 100.0;
    return t;
}

inline Eigen::VectorXd coordinates_from_trap(const TrapParameters& t, double top, bool fit_quartic)
{
    Eigen::VectorXd p(fit_quartic ? 3 : 2);
    p[0] = units::angular_to_khz(t.transverse_frequency - top);
    p[1] = std::log(units::angular_to_mhz(t.axial_frequency));
    if (fit_quartic) p[2] = 100.0 * t.axial_quartic;
    return p;
}

// Sum of squared mode mismatches in kHz^2; +inf when the trap is infeasible.
inline double spectrum_cost(const TrapParameters& trap, const std::vector<double>& measured)
{
    try {
        const ChainGeometry g = equilibrium_positions(trap, measured.size());
        const ModeData m = mode_parameters(trap, g);
        double s = 0.0;
        for (std::size_t i = 0; i < measured.size(); ++i) {
            const double r = units::angular_to_khz(m.collective_frequencies[static_cast<Eigen::Index>(i)] - measured[i]);
            s += r * r;
        }
        return s;
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline std::vector<double> sorted_modes(std::vector<double> measured)
{
    if (measured.size() < 2) throw InputError("spectrum fit needs at least two measured modes");
    for (double w : measured)
        if (!(w > 0.0)) throw InputError("measured mode frequencies must be positive");
    std::sort(measured.begin(), measured.end());
    return measured;
}

}  // namespace detail

/// Coarse scan over (wz, q), with wx on the highest measured mode, returning the
/// best grid point. Gives a feasible start for fit_chain_from_spectrum.
inline TrapParameters suggest_trap_guess(std::vector<double> measured, TrapParameters base = {})
{
    measured = detail::sorted_modes(std::move(measured));
    const double top = measured.back();
    const bool quartic = measured.size() > 2;
    TrapParameters best = base;
    double best_cost = std::numeric_limits<double>::infinity();
    const int nz = 40;
    for (int a = 0; a < nz; ++a) {
        const double wz = units::mhz_to_angular(0.02 * std::pow(50.0, a / double(nz - 1)));  // 20 kHz .. 1 MHz
        for (int b = 0; b < (quartic ? 31 : 1); ++b) {
            TrapParameters t = base;
            t.transverse_frequency = top;
            t.axial_frequency = wz;
            t.axial_quartic = quartic ? -0.02 + 0.004 * b : 0.0;
            const double c = detail::spectrum_cost(t, measured);
            if (c < best_cost) {
                best_cost = c;
                best = t;
            }
        }
    }
    if (!std::isfinite(best_cost)) throw InfeasibleError("no feasible trap found for the measured spectrum");
    return best;
}

/// Least-squares fit of (wx, wz, q) so the collective spectrum of the
/// equilibrium chain matches `measured` (rad/s). For two ions q is held at the
/// guess value, since spacing and quartic term are then degenerate.
///
/// Multi-start Nelder-Mead: start 0 is `guess`, the others are jittered copies
/// drawn from `opt.seed`; the lowest residual wins, ties to the lower index.
/// Throws NumericalError when even the best RMS residual exceeds opt.max_rms.
inline SpectrumFit fit_chain_from_spectrum(std::vector<double> measured, const TrapParameters& guess,
                                           const SpectrumFitOptions& opt = {})
{
    measured = detail::sorted_modes(std::move(measured));
    const double top = measured.back();
    const bool fit_quartic = measured.size() > 2;
    const double n = static_cast<double>(measured.size());

    auto cost = [&](const Eigen::VectorXd& p) {
        return detail::spectrum_cost(detail::trap_from_coordinates(p, guess, top, fit_quartic), measured);
    };

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SimplexOptions sopt;
    sopt.max_evaluations = opt.max_evaluations;
    sopt.initial_step = 0.05;
    sopt.f_tolerance = 1e-14;
    sopt.x_tolerance = 1e-9;
    sopt.restarts = 2;

    SpectrumFit fit;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_p;
    for (int s = 0; s < std::max(1, opt.starts); ++s) {
        Eigen::VectorXd p = detail::coordinates_from_trap(guess, top, fit_quartic);
        if (s > 0) {
            p[0] += 1.0 * normal(rng);
            p[1] += 0.05 * normal(rng);
            if (fit_quartic) p[2] += 0.2 * normal(rng);
        }
        const SimplexResult r = nelder_mead(cost, p, sopt);
        if (r.value < best) {
            best = r.value;
            best_p = r.x;
            fit.best_start = s;
            fit.history.clear();
            for (double h : r.history)
                fit.history.push_back(units::khz_to_angular(std::sqrt(std::min(h, 1e300) / n)));
        }
    }

    if (!std::isfinite(best)) throw NumericalError("spectrum fit found no feasible trap", best);
    fit.trap = detail::trap_from_coordinates(best_p, guess, top, fit_quartic);
    fit.geometry = equilibrium_positions(fit.trap, measured.size());
    fit.geometry.source = GeometrySource::fitted_from_spectrum;
    fit.modes = mode_parameters(fit.trap, fit.geometry);
    fit.rms_residual = units::khz_to_angular(std::sqrt(best / n));
    fit.converged = fit.rms_residual <= opt.target_rms;
    if (fit.rms_residual > opt.max_rms)
        throw NumericalError("spectrum fit did not converge: best RMS residual " +
                                 std::to_string(units::angular_to_khz(fit.rms_residual)) + " kHz, wx=" +
                                 std::to_string(units::angular_to_mhz(fit.trap.transverse_frequency)) + " MHz, wz=" +
                                 std::to_string(units::angular_to_mhz(fit.trap.axial_frequency)) + " MHz, q=" +
                                 std::to_string(fit.trap.axial_quartic),
                             units::angular_to_khz(fit.rms_residual));
    return fit;
}

// ---------------------------------------------------------------------------
// Beam profile

struct BeamFit {
    LaserProfile profile;
    bool flat = false;          // no measurable curvature; waist is +inf
    double rms_residual = 0.0;  // rad/s
};

/// Least-squares Gaussian Omega_0 exp(-2 (z - c)^2 / sigma^2) through measured
/// Rabi frequencies. Seeded by a quadratic fit to log(Omega), refined by
/// Nelder-Mead on the linear residual.
inline BeamFit fit_beam_profile(const std::vector<double>& positions, const std::vector<double>& rabi)
{
    if (positions.size() != rabi.size()) throw InputError("beam fit: positions and Rabi lists differ in length");
    std::vector<double> distinct = positions;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw InputError("beam fit: at least three distinct positions are required");
    for (double r : rabi)
        if (!(r > 0.0)) throw InputError("beam fit: Rabi frequencies must be positive");

    const auto m = static_cast<Eigen::Index>(positions.size());
    const double zc = 0.5 * (distinct.front() + distinct.back());
    const double half_span = 0.5 * (distinct.back() - distinct.front());
    Eigen::MatrixXd a(m, 3);
    Eigen::VectorXd y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const double x = (positions[static_cast<std::size_t>(k)] - zc) / half_span;
        a(k, 0) = 1.0;
        a(k, 1) = x;
        a(k, 2) = x * x;
        y[k] = std::log(rabi[static_cast<std::size_t>(k)]);
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(y);

    BeamFit fit;
    auto rms_of = [&](const LaserProfile& p) {
        double s = 0.0;
        for (std::size_t k = 0; k < positions.size(); ++k) {
            const double r = p.rabi_at(positions[k]) - rabi[k];
            s += r * r;
        }
        return std::sqrt(s / static_cast<double>(positions.size()));
    };

    // Fractional drop across the data below 1e-9, or upward curvature: flat.
    if (c[2] > -1e-9) {
        fit.flat = true;
        double mean = 0.0;
        for (double r : rabi) mean += r;
        fit.profile.peak_rabi = mean / static_cast<double>(rabi.size());
        fit.profile.waist = std::numeric_limits<double>::infinity();
        fit.profile.beam_center = zc;
        fit.rms_residual = rms_of(fit.profile);
        return fit;
    }

    // ln Omega = c0 + c1 x + c2 x^2 with x = (z - zc) / half_span.
    const double center_x = -c[1] / (2.0 * c[2]);
    const double sigma0 = half_span * std::sqrt(-2.0 / c[2]);
    const double peak0 = std::exp(c[0] - c[1] * c[1] / (4.0 * c[2]));
    const double center0 = zc + half_span * center_x;

    auto profile_of = [&](const Eigen::VectorXd& p) {
        LaserProfile lp;
        lp.peak_rabi = peak0 * std::exp(p[0]);
        lp.waist = sigma0 * std::exp(p[1]);
        lp.beam_center = center0 + half_span * p[2];
        return lp;
    };
    SimplexOptions sopt;
    sopt.initial_step = 0.02;
    sopt.f_tolerance = 0.0;
    sopt.x_tolerance = 1e-12;
    sopt.restarts = 2;
    const double scale = peak0;
    const SimplexResult r = nelder_mead(
        [&](const Eigen::VectorXd& p) {
            const double e = rms_of(profile_of(p)) / scale;
            return e * e;
        },
        Eigen::Vector3d::Zero(), sopt);
    fit.profile = profile_of(r.x);
    fit.rms_residual = rms_of(fit.profile);
    return fit;
}

// ---------------------------------------------------------------------------
// Per-ion couplings and detunings

struct SiteOptions {
    bool include_eta_variation = false;
    Eigen::VectorXd local_frequencies;  // absolute w~_i, required with eta variation
};

/// Position of the reference ("central") point: the middle ion for odd N,
/// the beam centre for even N.
inline double reference_position(const LaserProfile& profile, const ChainGeometry& geometry)
{
    const std::size_t n = geometry.size();
    return n % 2 == 1 ? geometry.positions[n / 2] : profile.beam_center;
}

/// g_i from the beam envelope scaled so the reference point has g_central,
/// optionally with the Lamb-Dicke factor sqrt(w~_c / w~_i); Delta_i from the
/// Stark profile D_0 exp(-4 z^2 / sigma^2) relative to the reference point.
inline SiteParameters derive_site_parameters(const LaserProfile& profile, const ChainGeometry& geometry,
                                             double g_central, double delta_central, const SiteOptions& opt = {})
{
    if (!(g_central > 0.0)) throw InputError("central coupling must be positive");
    const std::size_t n = geometry.size();
    const auto en = static_cast<Eigen::Index>(n);
    const double zc = reference_position(profile, geometry);
    const double env_c = profile.envelope(zc);
    const double stark_c = profile.stark_at(zc);

    double w_c = 0.0;
    if (opt.include_eta_variation) {
        if (opt.local_frequencies.size() != en)
            throw InputError("eta variation needs one local frequency per ion");
        w_c = n % 2 == 1 ? opt.local_frequencies[en / 2]
                         : 0.5 * (opt.local_frequencies[en / 2 - 1] + opt.local_frequencies[en / 2]);
    }

    SiteParameters site;
    site.couplings.resize(en);
    site.detunings.resize(en);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ei = static_cast<Eigen::Index>(i);
        const double z = geometry.positions[i];
        double g = g_central * profile.envelope(z) / env_c;
        if (opt.include_eta_variation) g *= std::sqrt(w_c / opt.local_frequencies[ei]);
        site.couplings[ei] = g;
        site.detunings[ei] = delta_central + (profile.stark_at(z) - stark_c);
    }
    return site;
}

}  // namespace jch
