#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "jch/error.hpp"
#include "jch/fock_basis.hpp"

namespace jch {

using Complex = std::complex<double>;
using StateVector = Eigen::VectorXcd;

/// Site-resolved coefficients of the JCH Hamiltonian, rad/s.
///
///   H = sum_i [ D_i/2 sz_i + w_i n_i + g_i (s+_i a_i + a_i^dag s-_i) ]
///     + sum_{i<j} t_ij (a_i^dag a_j + a_j^dag a_i)
struct JchParameters {
    Eigen::VectorXd detunings;
    Eigen::VectorXd local_frequencies;
    Eigen::VectorXd couplings;
    Eigen::MatrixXd hoppings;

    std::size_t size() const { return static_cast<std::size_t>(detunings.size()); }

    void validate() const
    {
        const auto n = detunings.size();
        if (local_frequencies.size() != n || couplings.size() != n || hoppings.rows() != n || hoppings.cols() != n)
            throw InputError("JchParameters: arrays must all have length N");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (hoppings(i, i) != 0.0) throw InputError("JchParameters: hopping diagonal must be zero");
            for (Eigen::Index j = 0; j < i; ++j)
                if (hoppings(i, j) != hoppings(j, i)) throw InputError("JchParameters: hoppings must be symmetric");
        }
    }

    /// Same coefficients with `shift` added to every detuning and local frequency.
    JchParameters gauge_shifted(double shift) const
    {
        JchParameters p = *this;
        p.detunings.array() += shift;
        p.local_frequencies.array() += shift;
        return p;
    }
};

/// Real symmetric Hamiltonian on a sector, stored as full CSR (both triangles),
/// columns ascending within each row, diagonal always present.
class SparseHamiltonian {
public:
    std::size_t dimension() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
    std::size_t nonzeros() const { return values_.size(); }
    const JchParameters& parameters() const { return params_; }

    std::span<const std::uint64_t> row_offsets() const { return row_ptr_; }
    std::span<const std::uint32_t> columns() const { return cols_; }
    std::span<const double> values() const { return values_; }

    std::size_t row_nonzeros(std::size_t r) const { return row_ptr_[r + 1] - row_ptr_[r]; }

    double diagonal(std::size_t r) const
    {
        for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            if (cols_[k] == r) return values_[k];
        return 0.0;
    }

    double mean_diagonal() const
    {
        double s = 0.0;
        for (std::size_t r = 0; r < dimension(); ++r) s += diagonal(r);
        return dimension() ? s / static_cast<double>(dimension()) : 0.0;
    }

    /// Max absolute row sum (an upper bound on the spectral radius).
    double norm_bound() const
    {
        double best = 0.0;
        for (std::size_t r = 0; r < dimension(); ++r) {
            double s = 0.0;
            for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += std::abs(values_[k]);
            best = std::max(best, s);
        }
        return best;
    }

    /// y = (H - shift) x. Rows are independent and each row is summed in column
    /// order, so the result does not depend on the thread count.
    void apply(std::span<const Complex> x, std::span<Complex> y, double shift = 0.0) const
    {
        if (x.size() != dimension() || y.size() != dimension())
            throw InputError("apply: vector length " + std::to_string(x.size()) + " does not match dimension " +
                             std::to_string(dimension()));
        const auto rows = static_cast<std::int64_t>(dimension());
        const std::uint64_t* rp = row_ptr_.data();
        const std::uint32_t* ci = cols_.data();
        const double* va = values_.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rows; ++r) {
            double re = 0.0, im = 0.0;
            for (auto k = rp[r]; k < rp[r + 1]; ++k) {
                const Complex xv = x[ci[k]];
                re += va[k] * xv.real();
                im += va[k] * xv.imag();
            }
            y[static_cast<std::size_t>(r)] = Complex(re, im) - shift * x[static_cast<std::size_t>(r)];
        }
    }

    StateVector apply(const StateVector& x) const
    {
        StateVector y(x.size());
        apply(std::span<const Complex>(x.data(), static_cast<std::size_t>(x.size())),
              std::span<Complex>(y.data(), static_cast<std::size_t>(y.size())));
        return y;
    }

    Eigen::MatrixXd to_dense() const
    {
        const auto d = static_cast<Eigen::Index>(dimension());
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t r = 0; r < dimension(); ++r)
            for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                m(static_cast<Eigen::Index>(r), cols_[k]) = values_[k];
        return m;
    }

    /// Coordinate listing "row col value" (0-based), one entry per line.
    void write_coordinate(std::ostream& os) const
    {
        os.precision(17);
        for (std::size_t r = 0; r < dimension(); ++r)
            for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) os << r << ' ' << cols_[k] << ' ' << values_[k] << '\n';
    }

private:
    friend SparseHamiltonian build_hamiltonian(const JchParameters&, const SectorBasis&);

    JchParameters params_;
    std::vector<std::uint64_t> row_ptr_;
    std::vector<std::uint32_t> cols_;
    std::vector<double> values_;
};

inline SparseHamiltonian build_hamiltonian(const JchParameters& params, const SectorBasis& basis)
{
    params.validate();
    const std::size_t n = params.size();
    if (n != basis.n_ions())
        throw InputError("build_hamiltonian: parameters describe " + std::to_string(n) + " ions, basis has " +
                         std::to_string(basis.n_ions()));

    SparseHamiltonian h;
    h.params_ = params;
    const std::size_t d = basis.size();
    h.row_ptr_.assign(d + 1, 0);
    h.cols_.reserve(d * (1 + n));
    h.values_.reserve(d * (1 + n));

    std::vector<std::pair<std::uint32_t, double>> row;
    std::vector<std::uint8_t> occ(n);
    auto push = [&](std::uint64_t spins, double value) {
        const std::size_t c = basis.find(spins, occ);
        if (c == SectorBasis::npos) throw InfeasibleError("build_hamiltonian: matrix element leaves the sector");
        row.emplace_back(static_cast<std::uint32_t>(c), value);
    };

    for (std::size_t r = 0; r < d; ++r) {
        row.clear();
        const std::uint64_t spins = basis.spins(r);
        const auto ph = basis.phonons(r);
        std::copy(ph.begin(), ph.end(), occ.begin());

        double diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            const bool up = (spins >> i) & 1U;
            diag += 0.5 * params.detunings[ei] * (up ? 1.0 : -1.0) + params.local_frequencies[ei] * ph[i];
        }
        row.emplace_back(static_cast<std::uint32_t>(r), diag);

        // Jaynes-Cummings exchange |up, n> <-> |down, n+1>.
        for (std::size_t i = 0; i < n; ++i) {
            const double g = params.couplings[static_cast<Eigen::Index>(i)];
            if (g == 0.0) continue;
            if ((spins >> i) & 1U) {
                occ[i] = static_cast<std::uint8_t>(ph[i] + 1);
                push(spins & ~(1ULL << i), g * std::sqrt(static_cast<double>(ph[i] + 1)));
                occ[i] = ph[i];
            } else if (ph[i] > 0) {
                occ[i] = static_cast<std::uint8_t>(ph[i] - 1);
                push(spins | (1ULL << i), g * std::sqrt(static_cast<double>(ph[i])));
                occ[i] = ph[i];
            }
        }

        // Hopping a_i^dag a_j for every ordered pair.
        for (std::size_t j = 0; j < n; ++j) {
            if (ph[j] == 0) continue;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == j) continue;
                const double t = params.hoppings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (t == 0.0) continue;
                occ[i] = static_cast<std::uint8_t>(ph[i] + 1);
                occ[j] = static_cast<std::uint8_t>(ph[j] - 1);
                push(spins, t * std::sqrt(static_cast<double>((ph[i] + 1) * ph[j])));
                occ[i] = ph[i];
                occ[j] = ph[j];
            }
        }

        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [c, v] : row) {
            h.cols_.push_back(c);
            h.values_.push_back(v);
        }
        h.row_ptr_[r + 1] = h.cols_.size();
    }
    return h;
}

namespace detail {

inline void require_normalized(const StateVector& v, const char* who)
{
    const double n2 = v.squaredNorm();
    if (std::abs(n2 - 1.0) > 1e-8)
        throw InputError(std::string(who) + ": state is not normalized (norm^2 = " + std::to_string(n2) + ")");
}

inline void require_size(const SectorBasis& basis, const StateVector& v, const char* who)
{
    if (static_cast<std::size_t>(v.size()) != basis.size())
        throw InputError(std::string(who) + ": vector length does not match the sector dimension");
}

}  // namespace detail

/// <sigma_z^i> for every ion of a normalized sector state.
inline std::vector<double> sigma_z_expectation(const SectorBasis& basis, const StateVector& v)
{
    detail::require_size(basis, v, "sigma_z_expectation");
    detail::require_normalized(v, "sigma_z_expectation");
    const unsigned n = basis.n_ions();
    std::vector<double> up(n, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const double p = std::norm(v[static_cast<Eigen::Index>(j)]);
        total += p;
        std::uint64_t s = basis.spins(j);
        while (s) {
            up[static_cast<std::size_t>(std::countr_zero(s))] += p;
            s &= s - 1;
        }
    }
    std::vector<double> sz(n);
    for (unsigned i = 0; i < n; ++i) sz[i] = 2.0 * up[i] - total;
    return sz;
}

/// Expected total excitation number sum_i (s_i + 1)/2 + n_i.
inline double excitation_expectation(const SectorBasis& basis, const StateVector& v)
{
    detail::require_size(basis, v, "excitation_expectation");
    detail::require_normalized(v, "excitation_expectation");
    double e = 0.0;
    for (std::size_t j = 0; j < basis.size(); ++j) {
        unsigned m = static_cast<unsigned>(std::popcount(basis.spins(j)));
        for (auto k : basis.phonons(j)) m += k;
        e += std::norm(v[static_cast<Eigen::Index>(j)]) * m;
    }
    return e;
}

/// Re <v|H|v>.
inline double energy_expectation(const SparseHamiltonian& h, const StateVector& v)
{
    return v.dot(h.apply(v)).real();
}

}  // namespace jch
