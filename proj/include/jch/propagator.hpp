#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jch/error.hpp"
#include "jch/fock_basis.hpp"
#include "jch/hamiltonian.hpp"

namespace jch {

enum class Method { krylov, dense_oracle };

inline const char* to_string(Method m) { return m == Method::krylov ? "krylov" : "dense"; }

struct KrylovOptions {
    double tolerance = 1e-9;     // error budget over `horizon`
    int max_dimension = 40;
    double max_step = 0.0;       // s, 0 = unbounded
    double horizon = 0.0;        // s, 0 = use the requested duration
    bool full_reorthogonalization = false;
};

struct EvolutionRequest {
    std::vector<unsigned> excited_ions;  // 1-based; used when initial_state is empty
    StateVector initial_state;
    double total_time = 0.0;             // s
    std::size_t samples = 2;
    Method method = Method::krylov;
    double krylov_tolerance = 1e-9;
    int max_krylov_dimension = 40;
    double max_step = 0.0;
    bool record_states = false;
    std::size_t dense_cap = 2000;
};

struct TimeSeries {
    std::vector<double> times;           // s
    Eigen::MatrixXd sigma_z;             // samples x N
    std::vector<double> norm_drift;
    std::vector<double> excitation_drift;
    std::vector<StateVector> states;     // filled when record_states is set

    std::size_t samples() const { return times.size(); }
    std::size_t n_ions() const { return static_cast<std::size_t>(sigma_z.cols()); }
};

/// Product state with spins up on `excited_ions` (1-based) and no phonons.
inline StateVector prepare_initial_state(const SectorBasis& basis, const std::vector<unsigned>& excited_ions)
{
    std::set<unsigned> seen;
    std::uint64_t spins = 0;
    for (unsigned ion : excited_ions) {
        if (ion < 1 || ion > basis.n_ions())
            throw InputError("excited ion " + std::to_string(ion) + " is outside 1.." + std::to_string(basis.n_ions()));
        if (!seen.insert(ion).second) throw InputError("excited ion " + std::to_string(ion) + " listed twice");
        spins |= 1ULL << (ion - 1);
    }
    if (excited_ions.size() != basis.excitations())
        throw InfeasibleError(std::to_string(excited_ions.size()) + " excited ions do not match the sector M=" +
                              std::to_string(basis.excitations()));
    BasisState s{spins, std::vector<std::uint8_t>(basis.n_ions(), 0)};
    StateVector v = StateVector::Zero(static_cast<Eigen::Index>(basis.size()));
    v[static_cast<Eigen::Index>(basis.index_of(s))] = 1.0;
    return v;
}

/// Short-iterate Lanczos propagator for exp(-i H t) on a real symmetric H.
///
/// Each substep builds the Krylov space of (H - c) with c the mean diagonal,
/// stops as soon as the residual estimate beta_j |[exp(-i tau T_j)]_{j,1}|
/// meets the share tol * |tau| / horizon of the error budget, and otherwise
/// shortens tau by bisection. The gauge phase exp(-i c tau) is restored.
class KrylovPropagator {
public:
    KrylovPropagator(const SparseHamiltonian& h, KrylovOptions options)
        : h_(h), opt_(options), shift_(h.mean_diagonal()), scale_(std::max(h.norm_bound(), 1e-300)),
          last_step_(opt_.max_dimension / (4.0 * scale_))
    {
        if (!(opt_.tolerance > 0.0)) throw InputError("krylov tolerance must be positive");
        if (opt_.max_dimension < 2) throw InputError("max krylov dimension must be at least 2");
        const auto d = static_cast<Eigen::Index>(h.dimension());
        basis_.resize(d, opt_.max_dimension + 1);
        work_.resize(d);
    }

    /// v <- exp(-i H t) v. Negative t propagates backwards.
    void advance(StateVector& v, double t)
    {
        const double horizon = opt_.horizon > 0.0 ? opt_.horizon : std::abs(t);
        double remaining = t;
        while (remaining != 0.0) {
            double tau = remaining;
            if (opt_.max_step > 0.0 && std::abs(tau) > opt_.max_step) tau = std::copysign(opt_.max_step, tau);
            // Start from a little more than the last accepted step.
            if (last_step_ > 0.0 && std::abs(tau) > 1.25 * last_step_) tau = std::copysign(1.25 * last_step_, tau);
            const double taken = substep(v, tau, horizon);
            remaining = (std::abs(remaining - taken) <= 1e-15 * std::abs(t)) ? 0.0 : remaining - taken;
        }
    }

    std::size_t substeps() const { return substeps_; }
    std::size_t matvecs() const { return matvecs_; }

private:
    // exp(-i tau T) e_1 for the symmetric tridiagonal T (diagonal a, off-diagonal
    // b) by Taylor series over sub-intervals with |h| ||T|| <= 4. Trailing
    // entries are tiny but keep their relative accuracy, which the residual
    // estimate depends on.
    static Eigen::VectorXcd small_exponential(const std::vector<double>& a, const std::vector<double>& b, int m,
                                              double tau)
    {
        double bound = 0.0;
        for (int k = 0; k < m; ++k) {
            double row = std::abs(a[static_cast<std::size_t>(k)]);
            if (k > 0) row += std::abs(b[static_cast<std::size_t>(k - 1)]);
            if (k + 1 < m) row += std::abs(b[static_cast<std::size_t>(k)]);
            bound = std::max(bound, row);
        }
        const int pieces = std::max(1, static_cast<int>(std::ceil(0.25 * std::abs(tau) * bound)));
        const double h = tau / pieces;
        Eigen::VectorXcd w = Eigen::VectorXcd::Zero(m), term(m), next(m);
        w[0] = 1.0;
        for (int p = 0; p < pieces; ++p) {
            term = w;
            for (int k = 1; k < 60; ++k) {
                for (int r = 0; r < m; ++r) {
                    Complex t = a[static_cast<std::size_t>(r)] * term[r];
                    if (r > 0) t += b[static_cast<std::size_t>(r - 1)] * term[r - 1];
                    if (r + 1 < m) t += b[static_cast<std::size_t>(r)] * term[r + 1];
                    const double f = h / k;
                    next[r] = Complex(f * t.imag(), -f * t.real());  // (-i f) t
                }
                term.swap(next);
                w += term;
                if (term.lpNorm<Eigen::Infinity>() <= 1e-18 * w.lpNorm<Eigen::Infinity>() &&
                    std::abs(term[m - 1]) <= 1e-18 * std::abs(w[m - 1]))
                    break;
            }
        }
        return w;
    }

    double substep(StateVector& v, double tau, double horizon)
    {
        const double beta0 = v.norm();
        if (beta0 == 0.0) return tau;
        const auto d = static_cast<Eigen::Index>(h_.dimension());
        const int mmax = static_cast<int>(std::min<Eigen::Index>(opt_.max_dimension, d));

        std::vector<double> alpha, beta;
        basis_.col(0) = v / beta0;
        int m = 0;
        double next_beta = 0.0;
        auto error_at = [&](double s) {
            return beta0 * next_beta * std::abs(small_exponential(alpha, beta, m, s)[m - 1]);
        };
        auto allowed = [&](double s) { return opt_.tolerance * std::abs(s) / horizon; };

        for (int j = 0; j < mmax; ++j) {
            auto q = basis_.col(j);
            h_.apply(std::span<const Complex>(q.data(), static_cast<std::size_t>(d)),
                     std::span<Complex>(work_.data(), static_cast<std::size_t>(d)), shift_);
            ++matvecs_;
            // Orthogonalise against the two newest vectors, twice; the whole
            // basis as well when full reorthogonalisation is requested.
            const int k0 = opt_.full_reorthogonalization ? 0 : std::max(0, j - 1);
            const auto recent = basis_.middleCols(k0, j + 1 - k0);
            const Eigen::VectorXcd proj = recent.adjoint() * work_;
            work_.noalias() -= recent * proj;
            const Eigen::VectorXcd again = recent.adjoint() * work_;
            work_.noalias() -= recent * again;
            alpha.push_back(proj[j - k0].real() + again[j - k0].real());
            next_beta = work_.norm();
            m = j + 1;

            const bool invariant = next_beta <= 1e-13 * scale_;
            if (invariant) next_beta = 0.0;
            if (invariant || error_at(tau) <= allowed(tau)) return finish(v, beta0, alpha, beta, m, tau);
            if (j + 1 < mmax) {
                beta.push_back(next_beta);
                basis_.col(j + 1) = work_ / next_beta;
            }
        }

        // Full Krylov space did not reach tau; take the longest step that does.
        double lo = 0.0, hi = tau;
        for (int it = 0; it < 60 && std::abs(hi - lo) > 1e-4 * std::abs(hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            (error_at(mid) <= allowed(mid) ? lo : hi) = mid;
        }
        if (std::abs(lo) < 1e-12 * horizon)
            throw NumericalError("krylov step underflow: tolerance unreachable with dimension " +
                                     std::to_string(mmax),
                                 error_at(hi));
        return finish(v, beta0, alpha, beta, m, lo);
    }

    double finish(StateVector& v, double beta0, const std::vector<double>& alpha, const std::vector<double>& beta,
                  int m, double tau)
    {
        const Eigen::VectorXcd c = small_exponential(alpha, beta, m, tau);
        v.noalias() = basis_.leftCols(m) * c;
        v *= beta0 * std::polar(1.0, -shift_ * tau);
        last_step_ = std::abs(tau);
        ++substeps_;
        return tau;
    }

    const SparseHamiltonian& h_;
    KrylovOptions opt_;
    double shift_;
    double scale_;
    Eigen::MatrixXcd basis_;
    StateVector work_;
    double last_step_;  // |tau| of the last accepted substep
    std::size_t substeps_ = 0;
    std::size_t matvecs_ = 0;
};

/// exp(-i H t) v via Krylov stepping.
inline StateVector propagate(const SparseHamiltonian& h, StateVector v, double t, KrylovOptions options = {})
{
    KrylovPropagator prop(h, options);
    prop.advance(v, t);
    return v;
}

/// Exact propagator from a dense eigendecomposition. For verification only.
class DensePropagator {
public:
    DensePropagator(const SparseHamiltonian& h, std::size_t cap = 2000)
    {
        if (h.dimension() > cap)
            throw InfeasibleError("dense oracle limited to dimension " + std::to_string(cap) + ", sector has " +
                                  std::to_string(h.dimension()));
        eig_.compute(h.to_dense());
    }

    StateVector evolve(const StateVector& v0, double t) const
    {
        const Eigen::MatrixXd& u = eig_.eigenvectors();
        Eigen::VectorXcd c = u.transpose().cast<Complex>() * v0;
        for (Eigen::Index k = 0; k < c.size(); ++k) c[k] *= std::polar(1.0, -eig_.eigenvalues()[k] * t);
        return u.cast<Complex>() * c;
    }

    const Eigen::VectorXd& energies() const { return eig_.eigenvalues(); }

private:
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
};

/// Evolves the requested initial state and samples <sigma_z^i> on a uniform
/// grid of `samples` points spanning [0, total_time].
inline TimeSeries evolve(const SparseHamiltonian& h, const EvolutionRequest& req, const SectorBasis& basis)
{
    if (!(req.total_time > 0.0)) throw InputError("evolve: total time must be positive");
    if (req.samples < 2) throw InputError("evolve: at least two samples are required");
    if (!(req.krylov_tolerance > 0.0 && req.krylov_tolerance <= 1e-3))
        throw InputError("evolve: krylov tolerance must lie in (0, 1e-3]");
    if (h.dimension() != basis.size()) throw InputError("evolve: Hamiltonian and basis dimensions differ");

    StateVector v;
    if (req.initial_state.size() > 0) {
        if (static_cast<std::size_t>(req.initial_state.size()) != basis.size())
            throw InputError("evolve: initial state length does not match the sector dimension");
        v = req.initial_state;
    } else {
        v = prepare_initial_state(basis, req.excited_ions);
    }
    detail::require_normalized(v, "evolve");
    const StateVector v0 = v;

    TimeSeries out;
    const std::size_t n = basis.n_ions();
    out.sigma_z.resize(static_cast<Eigen::Index>(req.samples), static_cast<Eigen::Index>(n));
    const double m = basis.excitations();

    auto record = [&](std::size_t k, double t, const StateVector& state) {
        out.times.push_back(t);
        const auto sz = sigma_z_expectation(basis, state);
        for (std::size_t i = 0; i < n; ++i) out.sigma_z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = sz[i];
        out.norm_drift.push_back(std::abs(state.norm() - 1.0));
        out.excitation_drift.push_back(std::abs(excitation_expectation(basis, state) - m));
        if (req.record_states) out.states.push_back(state);
    };
    auto grid = [&](std::size_t k) {
        return req.total_time * static_cast<double>(k) / static_cast<double>(req.samples - 1);
    };

    if (req.method == Method::dense_oracle) {
        const DensePropagator dense(h, req.dense_cap);
        for (std::size_t k = 0; k < req.samples; ++k) record(k, grid(k), dense.evolve(v0, grid(k)));
        return out;
    }

    KrylovOptions opt;
    opt.tolerance = req.krylov_tolerance;
    opt.max_dimension = req.max_krylov_dimension;
    opt.max_step = req.max_step;
    opt.horizon = req.total_time;
    KrylovPropagator prop(h, opt);
    record(0, 0.0, v);
    for (std::size_t k = 1; k < req.samples; ++k) {
        prop.advance(v, grid(k) - grid(k - 1));
        record(k, grid(k), v);
    }
    return out;
}

/// Per-sample mean of <sigma_z^i> over the ions.
inline std::vector<double> average_sigma_z(const TimeSeries& series)
{
    std::vector<double> avg(series.samples(), 0.0);
    if (series.n_ions() == 0) return avg;
    for (std::size_t k = 0; k < series.samples(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < series.n_ions(); ++i)
            s += series.sigma_z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
        avg[k] = s / static_cast<double>(series.n_ions());
    }
    return avg;
}

/// CSV: time_us, sz_ion1..sz_ionN, norm_drift, excitation_drift.
inline void write_timeseries_csv(std::ostream& os, const TimeSeries& series)
{
    os << "time_us";
    for (std::size_t i = 0; i < series.n_ions(); ++i) os << ",sz_ion" << i + 1;
    os << ",norm_drift,excitation_drift\n";
    char buf[64];
    for (std::size_t k = 0; k < series.samples(); ++k) {
        std::snprintf(buf, sizeof buf, "%.6f", series.times[k] * 1e6);
        os << buf;
        for (std::size_t i = 0; i < series.n_ions(); ++i) {
            std::snprintf(buf, sizeof buf, ",%.12e",
                          series.sigma_z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
            os << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.3e,%.3e\n", series.norm_drift[k], series.excitation_drift[k]);
        os << buf;
    }
}

}  // namespace jch
