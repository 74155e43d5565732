#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jch/error.hpp"
#include "jch/units.hpp"

namespace jch {

/// Linear Paul trap seen by a chain of identical ions.
///
/// The axial potential is (1/2) m wz^2 z^2 + m wz^2 q z^4 / l^2 with the
/// Coulomb length l = (k_e / (m wz^2))^(1/3); q = 0 is the pure harmonic trap.
struct TrapParameters {
    double ion_mass = units::yb171_mass;
    double transverse_frequency = 0.0;  // wx, rad/s
    double axial_frequency = 0.0;       // wz, rad/s
    double axial_quartic = 0.0;         // q, dimensionless
    double coulomb_constant = units::coulomb_constant;

    double length_scale() const
    {
        return std::cbrt(coulomb_constant / (ion_mass * axial_frequency * axial_frequency));
    }
    // e^2 / (4 pi eps0 m), m^3/s^2
    double coulomb_per_mass() const { return coulomb_constant / ion_mass; }
};

enum class GeometrySource { solved_from_trap, fitted_from_spectrum, explicit_spacings };

inline const char* to_string(GeometrySource s)
{
    switch (s) {
    case GeometrySource::solved_from_trap: return "solved-from-trap";
    case GeometrySource::fitted_from_spectrum: return "fitted-from-spectrum";
    case GeometrySource::explicit_spacings: return "explicit-spacings";
    }
    return "unknown";
}

struct ChainGeometry {
    std::vector<double> positions;  // m, strictly increasing
    GeometrySource source = GeometrySource::explicit_spacings;

    std::size_t size() const { return positions.size(); }

    std::vector<double> spacings() const
    {
        std::vector<double> d;
        for (std::size_t i = 1; i < positions.size(); ++i) d.push_back(positions[i] - positions[i - 1]);
        return d;
    }

    /// Builds a chain centred on z = 0 from nearest-neighbour spacings in metres.
    static ChainGeometry from_spacings(std::span<const double> spacings)
    {
        ChainGeometry g;
        g.source = GeometrySource::explicit_spacings;
        g.positions.assign(spacings.size() + 1, 0.0);
        for (std::size_t i = 0; i < spacings.size(); ++i) {
            if (!(spacings[i] > 0.0)) throw InputError("ion spacing " + std::to_string(i + 1) + " is not positive");
            g.positions[i + 1] = g.positions[i] + spacings[i];
        }
        const double length = g.positions.back();
        const std::size_t n = g.positions.size();
        // Centre, and make mirror-symmetric spacing lists give bitwise mirror positions.
        for (std::size_t i = 0; i < n; ++i) g.positions[i] -= 0.5 * length;
        bool mirror = true;
        for (std::size_t i = 0; i < spacings.size(); ++i)
            mirror = mirror && spacings[i] == spacings[spacings.size() - 1 - i];
        if (mirror) {
            for (std::size_t i = 0; i < n / 2; ++i) {
                const double half = 0.5 * (g.positions[n - 1 - i] - g.positions[i]);
                g.positions[i] = -half;
                g.positions[n - 1 - i] = half;
            }
            if (n % 2 == 1) g.positions[n / 2] = 0.0;
        }
        return g;
    }
};

/// Transverse local-mode description of a chain; all entries in rad/s.
struct ModeData {
    Eigen::VectorXd local_frequencies;    // w_i
    Eigen::VectorXd corrected_local;      // w~_i
    Eigen::MatrixXd hopping;              // t_ij, zero diagonal
    Eigen::MatrixXd corrected_hopping;    // t~_ij, zero diagonal
    Eigen::VectorXd collective_frequencies;  // ascending

    std::size_t size() const { return static_cast<std::size_t>(local_frequencies.size()); }
};

struct EquilibriumOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;  // max |force| in units of m wz^2 l
};

namespace detail {

// Sum of values in ascending magnitude order. Mirror-image ions see the same
// multiset of terms, so this keeps their sums bitwise identical.
inline double sorted_sum(std::vector<double>& terms)
{
    std::sort(terms.begin(), terms.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

// Dimensionless axial force on every ion at positions u (units of l).
inline Eigen::VectorXd axial_force(const Eigen::VectorXd& u, double quartic)
{
    const Eigen::Index n = u.size();
    Eigen::VectorXd f(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double coulomb = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = u[i] - u[j];
            coulomb += (d > 0 ? 1.0 : -1.0) / (d * d);
        }
        f[i] = -u[i] - 4.0 * quartic * u[i] * u[i] * u[i] + coulomb;
    }
    return f;
}

inline Eigen::MatrixXd axial_force_jacobian(const Eigen::VectorXd& u, double quartic)
{
    const Eigen::Index n = u.size();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double diag = -1.0 - 12.0 * quartic * u[i] * u[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double c = 2.0 / std::pow(std::abs(u[i] - u[j]), 3);
            jac(i, j) = c;
            diag -= c;
        }
        jac(i, i) = diag;
    }
    return jac;
}

inline bool strictly_increasing(const Eigen::VectorXd& u)
{
    for (Eigen::Index i = 1; i < u.size(); ++i)
        if (!(u[i] > u[i - 1])) return false;
    return true;
}

// Damped Newton on the force balance. Returns the final max-norm residual.
inline double newton_balance(Eigen::VectorXd& u, double quartic, const EquilibriumOptions& opt)
{
    Eigen::VectorXd f = axial_force(u, quartic);
    double residual = f.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < opt.max_iterations && residual > opt.tolerance; ++it) {
        const Eigen::VectorXd step = axial_force_jacobian(u, quartic).partialPivLu().solve(-f);
        double damping = 1.0;
        const double norm = f.norm();
        bool accepted = false;
        while (damping > 1e-8) {
            const Eigen::VectorXd trial = u + damping * step;
            if (strictly_increasing(trial)) {
                const Eigen::VectorXd ft = axial_force(trial, quartic);
                if (ft.norm() < norm) {
                    u = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        residual = f.lpNorm<Eigen::Infinity>();
        if (!accepted) break;
    }
    return residual;
}

}  // namespace detail

/// Equilibrium positions of n ions in the axial potential of `trap`.
///
/// The harmonic chain is solved first from a uniform guess with the known
/// N^0.56 length scaling, then the quartic term is switched on by
/// continuation. Throws NumericalError when the force residual does not reach
/// `opt.tolerance`, and InfeasibleError when the stationary point found is not
/// a minimum (possible only for a negative quartic coefficient).
inline ChainGeometry equilibrium_positions(const TrapParameters& trap, std::size_t n_ions,
                                           const EquilibriumOptions& opt = {})
{
    if (n_ions == 0) throw InputError("equilibrium_positions: n_ions must be at least 1");
    if (!(trap.axial_frequency > 0.0)) throw InputError("equilibrium_positions: axial frequency must be positive");
    if (!(trap.ion_mass > 0.0)) throw InputError("equilibrium_positions: ion mass must be positive");

    ChainGeometry geometry;
    geometry.source = GeometrySource::solved_from_trap;
    if (n_ions == 1) {
        geometry.positions = {0.0};
        return geometry;
    }

    const auto n = static_cast<Eigen::Index>(n_ions);
    const double half_extent = 1.05 * std::pow(static_cast<double>(n_ions), 0.56);
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(n, -half_extent, half_extent);

    double residual = detail::newton_balance(u, 0.0, opt);
    if (residual > opt.tolerance)
        throw NumericalError("equilibrium solve did not converge for the harmonic chain", residual);

    const double q = trap.axial_quartic;
    if (q != 0.0) {
        const double umax = u[n - 1];
        const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(q) * umax * umax / 0.05)));
        for (int s = 1; s <= steps; ++s) {
            residual = detail::newton_balance(u, q * s / steps, opt);
            if (residual > opt.tolerance)
                throw NumericalError("equilibrium solve did not converge with quartic term", residual);
        }
        // -J must be positive definite at a stable equilibrium.
        const Eigen::MatrixXd stiffness = -detail::axial_force_jacobian(u, q);
        if (stiffness.llt().info() != Eigen::Success)
            throw InfeasibleError("axial potential has no stable chain configuration for quartic coefficient " +
                                  std::to_string(q));
    }

    for (Eigen::Index i = 0; i < n / 2; ++i) {
        const double half = 0.5 * (u[n - 1 - i] - u[i]);
        u[i] = -half;
        u[n - 1 - i] = half;
    }
    if (n % 2 == 1) u[n / 2] = 0.0;

    const double ell = trap.length_scale();
    geometry.positions.resize(n_ions);
    for (Eigen::Index i = 0; i < n; ++i) geometry.positions[static_cast<std::size_t>(i)] = u[i] * ell;
    return geometry;
}

/// Largest net axial force on any ion, in units of m wz^2 l.
inline double force_residual(const TrapParameters& trap, const ChainGeometry& geometry)
{
    const double ell = trap.length_scale();
    Eigen::VectorXd u(static_cast<Eigen::Index>(geometry.size()));
    for (std::size_t i = 0; i < geometry.size(); ++i) u[static_cast<Eigen::Index>(i)] = geometry.positions[i] / ell;
    return detail::axial_force(u, trap.axial_quartic).lpNorm<Eigen::Infinity>();
}

/// Eigenvalues (ascending) of diag(local) + hopping.
inline Eigen::VectorXd collective_spectrum(const Eigen::VectorXd& local, const Eigen::MatrixXd& hopping)
{
    Eigen::MatrixXd m = hopping;
    m.diagonal() = local;
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
}

enum class SpectrumFrom { corrected, uncorrected };

/// Local transverse frequencies, hoppings, their second-order corrections and
/// the collective spectrum for a chain at the given equilibrium positions.
///
/// Throws InfeasibleError naming the first ion whose local frequency squared
/// is not positive (zigzag instability).
inline ModeData mode_parameters(const TrapParameters& trap, const ChainGeometry& geometry,
                                SpectrumFrom spectrum = SpectrumFrom::corrected)
{
    const std::size_t n = geometry.size();
    if (n == 0) throw InputError("mode_parameters: empty geometry");
    if (!(trap.transverse_frequency > 0.0)) throw InputError("mode_parameters: transverse frequency must be positive");
    const double wx = trap.transverse_frequency;
    const double k = trap.coulomb_per_mass();
    const auto& z = geometry.positions;
    const auto en = static_cast<Eigen::Index>(n);

    auto inv_cube = [&](std::size_t i, std::size_t j) {
        const double d = std::abs(z[i] - z[j]);
        return 1.0 / (d * d * d);
    };

    ModeData modes;
    modes.local_frequencies.resize(en);
    std::vector<double> terms;
    for (std::size_t i = 0; i < n; ++i) {
        terms.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) terms.push_back(inv_cube(i, j));
        const double w2 = wx * wx - k * detail::sorted_sum(terms);
        if (!(w2 > 0.0))
            throw InfeasibleError("zigzag instability: local transverse frequency of ion " + std::to_string(i + 1) +
                                  " is imaginary");
        modes.local_frequencies[static_cast<Eigen::Index>(i)] = std::sqrt(w2);
    }

    const Eigen::VectorXd& w = modes.local_frequencies;
    modes.hopping = Eigen::MatrixXd::Zero(en, en);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
                modes.hopping(a, b) = k / (2.0 * std::sqrt(w[a] * w[b])) * inv_cube(i, j);
            }

    const Eigen::MatrixXd& t = modes.hopping;
    modes.corrected_local.resize(en);
    for (Eigen::Index i = 0; i < en; ++i) {
        terms.clear();
        for (Eigen::Index j = 0; j < en; ++j)
            if (j != i) terms.push_back(t(i, j) * t(i, j));
        modes.corrected_local[i] = w[i] - detail::sorted_sum(terms) / (2.0 * wx);
    }
    modes.corrected_hopping = Eigen::MatrixXd::Zero(en, en);
    for (Eigen::Index i = 0; i < en; ++i)
        for (Eigen::Index j = 0; j < en; ++j) {
            if (i == j) continue;
            terms.clear();
            for (Eigen::Index m = 0; m < en; ++m)
                if (m != i && m != j) terms.push_back(t(i, m) * t(j, m));
            modes.corrected_hopping(i, j) = t(i, j) - detail::sorted_sum(terms) / (2.0 * wx);
        }

    modes.collective_frequencies = spectrum == SpectrumFrom::corrected
                                       ? collective_spectrum(modes.corrected_local, modes.corrected_hopping)
                                       : collective_spectrum(modes.local_frequencies, modes.hopping);
    return modes;
}

/// Moves local and collective frequencies into a frame rotating at `reference`.
/// Hoppings are unchanged.
inline ModeData interaction_picture_shift(ModeData modes, double reference)
{
    modes.local_frequencies.array() -= reference;
    modes.corrected_local.array() -= reference;
    modes.collective_frequencies.array() -= reference;
    return modes;
}

/// Transverse frequency wx for which the highest collective mode of `geometry`
/// equals `top_mode`. Bisection on a bracket around `top_mode`.
inline double anchor_transverse_frequency(TrapParameters trap, const ChainGeometry& geometry, double top_mode)
{
    auto excess = [&](double wx) {
        trap.transverse_frequency = wx;
        try {
            const ModeData m = mode_parameters(trap, geometry);
            return m.collective_frequencies[m.collective_frequencies.size() - 1] - top_mode;
        } catch (const InfeasibleError&) {
            return -top_mode;
        }
    };
    double lo = 0.5 * top_mode, hi = 1.5 * top_mode;
    if (excess(lo) > 0.0 || excess(hi) < 0.0)
        throw InfeasibleError("cannot place the highest collective mode at the requested frequency");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * top_mode; ++it) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace jch
