#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "jch/error.hpp"

namespace jch {

using BigInt = boost::multiprecision::cpp_int;

inline BigInt binomial(unsigned n, unsigned k)
{
    if (k > n) return 0;
    k = std::min(k, n - k);
    BigInt c = 1;
    for (unsigned i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

/// Number of basis states of N spin-boson sites with M total excitations:
/// sum over k spin flips of C(N, k) * C(N + M - k - 1, N - 1).
inline BigInt sector_dimension(unsigned n_ions, unsigned excitations)
{
    if (n_ions == 0) throw InputError("sector_dimension: N must be at least 1");
    BigInt d = 0;
    for (unsigned k = 0; k <= std::min(n_ions, excitations); ++k)
        d += binomial(n_ions, k) * binomial(n_ions + excitations - k - 1, n_ions - 1);
    return d;
}

inline double log2(const BigInt& x)
{
    if (x <= 0) return -std::numeric_limits<double>::infinity();
    const unsigned bits = static_cast<unsigned>(boost::multiprecision::msb(x));
    if (bits < 53) return std::log2(x.convert_to<double>());
    const BigInt top = x >> (bits - 52);
    return std::log2(top.convert_to<double>()) + (bits - 52);
}

/// Product state |s_1, n_1> ... |s_N, n_N>. Bit i of `spins` is ion i+1 (1 = up).
struct BasisState {
    std::uint64_t spins = 0;
    std::vector<std::uint8_t> phonons;

    unsigned excitations() const
    {
        unsigned m = static_cast<unsigned>(std::popcount(spins));
        for (auto n : phonons) m += n;
        return m;
    }
    bool spin_up(std::size_t ion) const { return (spins >> ion) & 1U; }
    bool operator==(const BasisState&) const = default;
};

struct SectorLimits {
    std::size_t max_dimension = 5'000'000;
};

/// Immutable enumeration of the fixed-excitation sector.
///
/// Ordering: spin bitmask ascending, then phonon occupations in colexicographic
/// order (n_N most significant). Packed encoding of a state, used for hashing
/// and golden files: spin mask as 8 little-endian bytes, then one byte per
/// site occupation.
class SectorBasis {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    unsigned n_ions() const { return n_ions_; }
    unsigned excitations() const { return excitations_; }
    std::size_t size() const { return spins_.size(); }

    std::uint64_t spins(std::size_t j) const { return spins_[j]; }
    std::span<const std::uint8_t> phonons(std::size_t j) const
    {
        return {phonons_.data() + j * n_ions_, n_ions_};
    }
    BasisState state(std::size_t j) const
    {
        auto p = phonons(j);
        return {spins_[j], std::vector<std::uint8_t>(p.begin(), p.end())};
    }

    /// Position of (spins, phonons), or npos if the state is not in the basis.
    std::size_t find(std::uint64_t spins, std::span<const std::uint8_t> phonons) const
    {
        if (phonons.size() != n_ions_) return npos;
        const std::size_t mask = table_.size() - 1;
        for (std::size_t slot = hash(spins, phonons) & mask;; slot = (slot + 1) & mask) {
            const std::uint32_t entry = table_[slot];
            if (entry == 0) return npos;
            const std::size_t j = entry - 1;
            if (spins_[j] == spins && std::equal(phonons.begin(), phonons.end(), phonons_.begin() + j * n_ions_))
                return j;
        }
    }

    std::size_t index_of(const BasisState& s) const
    {
        if (s.phonons.size() != n_ions_)
            throw InputError("index_of: state has " + std::to_string(s.phonons.size()) + " sites, basis has " +
                             std::to_string(n_ions_));
        if (s.excitations() != excitations_)
            throw InputError("index_of: state carries " + std::to_string(s.excitations()) +
                             " excitations, sector has " + std::to_string(excitations_));
        const std::size_t j = find(s.spins, s.phonons);
        if (j == npos) throw InputError("index_of: state not in sector");
        return j;
    }

    static std::uint64_t hash(std::uint64_t spins, std::span<const std::uint8_t> phonons)
    {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (int b = 0; b < 8; ++b) {
            h ^= (spins >> (8 * b)) & 0xFFU;
            h *= 1099511628211ULL;
        }
        for (auto n : phonons) {
            h ^= n;
            h *= 1099511628211ULL;
        }
        return h ^ (h >> 29);
    }

private:
    friend SectorBasis enumerate_sector(unsigned, unsigned, const SectorLimits&);

    void build_index()
    {
        std::size_t cap = 16;
        while (cap < 2 * size()) cap <<= 1;
        table_.assign(cap, 0);
        const std::size_t mask = cap - 1;
        for (std::size_t j = 0; j < size(); ++j) {
            std::size_t slot = hash(spins_[j], phonons(j)) & mask;
            while (table_[slot] != 0) slot = (slot + 1) & mask;
            table_[slot] = static_cast<std::uint32_t>(j + 1);
        }
    }

    unsigned n_ions_ = 0;
    unsigned excitations_ = 0;
    std::vector<std::uint64_t> spins_;
    std::vector<std::uint8_t> phonons_;  // size() * n_ions_, row-major
    std::vector<std::uint32_t> table_;
};

namespace detail {

// Appends every weak composition of `total` into occ.size() parts, colex order.
inline void append_compositions(std::vector<std::uint8_t>& occ, std::size_t site, unsigned total,
                                std::vector<std::uint8_t>& out)
{
    if (site == 0) {
        occ[0] = static_cast<std::uint8_t>(total);
        out.insert(out.end(), occ.begin(), occ.end());
        return;
    }
    for (unsigned n = 0; n <= total; ++n) {
        occ[site] = static_cast<std::uint8_t>(n);
        append_compositions(occ, site - 1, total - n, out);
    }
    occ[site] = 0;
}

}  // namespace detail

inline SectorBasis enumerate_sector(unsigned n_ions, unsigned excitations, const SectorLimits& limits = {})
{
    if (n_ions == 0 || n_ions > 64) throw InputError("enumerate_sector: N must be in 1..64");
    if (excitations > 255) throw InputError("enumerate_sector: M must be at most 255");
    const BigInt dim = sector_dimension(n_ions, excitations);
    if (dim > limits.max_dimension)
        throw InfeasibleError("sector (N=" + std::to_string(n_ions) + ", M=" + std::to_string(excitations) +
                              ") has dimension " + dim.str() + " (log2 " + std::to_string(log2(dim)) +
                              "), above the cap of " + std::to_string(limits.max_dimension));

    // Spin masks with popcount <= M, ascending. Gosper's hack per popcount.
    std::vector<std::uint64_t> masks;
    auto low_bits = [](unsigned k) { return k >= 64 ? ~0ULL : (1ULL << k) - 1; };
    for (unsigned k = 0; k <= std::min(n_ions, excitations); ++k) {
        std::uint64_t m = low_bits(k);
        const std::uint64_t last = k == 0 ? 0 : low_bits(k) << (n_ions - k);
        while (true) {
            masks.push_back(m);
            if (m == last) break;
            const std::uint64_t c = m & (~m + 1);
            const std::uint64_t r = m + c;
            m = (((r ^ m) >> 2) / c) | r;
        }
    }
    std::sort(masks.begin(), masks.end());

    SectorBasis basis;
    basis.n_ions_ = n_ions;
    basis.excitations_ = excitations;
    const auto d = dim.convert_to<std::size_t>();
    basis.spins_.reserve(d);
    basis.phonons_.reserve(d * n_ions);
    std::vector<std::uint8_t> occ(n_ions, 0);
    for (std::uint64_t m : masks) {
        const unsigned remaining = excitations - static_cast<unsigned>(std::popcount(m));
        const std::size_t before = basis.phonons_.size();
        detail::append_compositions(occ, n_ions - 1, remaining, basis.phonons_);
        basis.spins_.insert(basis.spins_.end(), (basis.phonons_.size() - before) / n_ions, m);
    }
    basis.build_index();
    return basis;
}

/// Debug listing: index, spin string (u/d, ion 1 first), phonon occupations.
inline void write_sector_csv(std::ostream& os, const SectorBasis& basis)
{
    os << "index,spins,phonons\n";
    for (std::size_t j = 0; j < basis.size(); ++j) {
        os << j << ',';
        for (unsigned i = 0; i < basis.n_ions(); ++i) os << (((basis.spins(j) >> i) & 1U) ? 'u' : 'd');
        os << ',';
        auto p = basis.phonons(j);
        for (unsigned i = 0; i < basis.n_ions(); ++i) os << (i ? " " : "") << static_cast<unsigned>(p[i]);
        os << '\n';
    }
}

}  // namespace jch
