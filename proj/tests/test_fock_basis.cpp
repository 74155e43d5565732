#include <bit>
#include <sstream>

#include <gtest/gtest.h>

#include "jch/fock_basis.hpp"

using namespace jch;

namespace {

// Counts every (spin mask, occupation list) with n_i <= M whose excitation
// total is M, by odometer over the full product space.
std::uint64_t brute_force_dimension(unsigned n, unsigned m)
{
    std::uint64_t count = 0;
    std::vector<unsigned> occ(n, 0);
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
        std::fill(occ.begin(), occ.end(), 0);
        while (true) {
            unsigned total = static_cast<unsigned>(std::popcount(mask));
            for (unsigned x : occ) total += x;
            if (total == m) ++count;
            std::size_t k = 0;
            while (k < n && occ[k] == m) occ[k++] = 0;
            if (k == n) break;
            ++occ[k];
        }
    }
    return count;
}

// Site-by-site generating function: each site absorbs 0 excitations one way
// and a >= 1 excitations two ways (spin up + a-1 phonons, or a phonons).
BigInt dp_dimension(unsigned n, unsigned m)
{
    std::vector<BigInt> ways(m + 1, 0);
    ways[0] = 1;
    for (unsigned s = 0; s < n; ++s) {
        std::vector<BigInt> next(m + 1, 0);
        for (unsigned a = 0; a <= m; ++a)
            for (unsigned add = 0; a + add <= m; ++add) next[a + add] += ways[a] * (add ? 2 : 1);
        ways = std::move(next);
    }
    return ways[m];
}

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

TEST(SectorDimension, SmallCases)
{
    EXPECT_EQ(sector_dimension(1, 1), 2);
    EXPECT_EQ(sector_dimension(4, 2), 32);
    EXPECT_EQ(sector_dimension(20, 2), 800);
    EXPECT_EQ(sector_dimension(4, 4), 192);
    EXPECT_EQ(sector_dimension(8, 8), 157184);
}

TEST(SectorDimension, MatchesGeneratingFunction)
{
    for (unsigned n : {4u, 8u, 20u, 32u})
        for (unsigned m : {0u, 1u, 2u, 8u, 32u}) EXPECT_EQ(sector_dimension(n, m), dp_dimension(n, m)) << n << "," << m;
}

TEST(SectorDimension, ThirtyTwoIonsExceeds77Qubits)
{
    const BigInt d = sector_dimension(32, 32);
    EXPECT_EQ(d, BigInt("186268135991213676920832"));
    EXPECT_GT(d, BigInt(1) << 77);
    EXPECT_GT(log2(d), 77.0);
    EXPECT_LT(log2(d), 78.0);
}

TEST(SectorDimension, BoundaryIdentities)
{
    for (unsigned n = 1; n <= 40; ++n) EXPECT_EQ(sector_dimension(n, 0), 1);
    // One site holds either |down, M> or |up, M-1>.
    for (unsigned m = 0; m <= 40; ++m) EXPECT_EQ(sector_dimension(1, m), m == 0 ? 1 : 2);
    for (unsigned n = 1; n <= 40; ++n) EXPECT_EQ(sector_dimension(n, 1), 2 * n);
    EXPECT_THROW(sector_dimension(0, 3), InputError);
}

TEST(SectorDimension, BruteForceUpToSix)
{
    for (unsigned n = 1; n <= 6; ++n)
        for (unsigned m = 0; m <= 6; ++m) {
            const auto expected = brute_force_dimension(n, m);
            EXPECT_EQ(sector_dimension(n, m), expected) << n << "," << m;
            EXPECT_EQ(enumerate_sector(n, m).size(), expected) << n << "," << m;
        }
}

TEST(EnumerateSector, SingleSite)
{
    const SectorBasis b = enumerate_sector(1, 1);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b.state(0), (BasisState{0, {1}}));
    EXPECT_EQ(b.state(1), (BasisState{1, {0}}));
}

TEST(EnumerateSector, TwoSitesOneExcitation)
{
    const SectorBasis b = enumerate_sector(2, 1);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b.state(0), (BasisState{0b00, {1, 0}}));
    EXPECT_EQ(b.state(1), (BasisState{0b00, {0, 1}}));
    EXPECT_EQ(b.state(2), (BasisState{0b01, {0, 0}}));
    EXPECT_EQ(b.state(3), (BasisState{0b10, {0, 0}}));
}

TEST(EnumerateSector, EightByEight)
{
    const SectorBasis b = enumerate_sector(8, 8);
    EXPECT_EQ(b.size(), 157184u);
    for (std::size_t j = 0; j < b.size(); j += 997) EXPECT_EQ(b.state(j).excitations(), 8u);
}

TEST(EnumerateSector, EveryStateSatisfiesConstraint)
{
    for (unsigned n = 1; n <= 5; ++n)
        for (unsigned m = 0; m <= 5; ++m) {
            const SectorBasis b = enumerate_sector(n, m);
            for (std::size_t j = 0; j < b.size(); ++j) {
                const BasisState s = b.state(j);
                ASSERT_EQ(s.excitations(), m);
                for (auto x : s.phonons) ASSERT_LE(x, m);
            }
        }
}

TEST(EnumerateSector, GoldenListingHash)
{
    std::ostringstream os;
    write_sector_csv(os, enumerate_sector(5, 3));
    const std::string listing = os.str();
    EXPECT_EQ(listing.substr(0, 40), "index,spins,phonons\n0,ddddd,3 0 0 0 0\n1,");
    EXPECT_EQ(fnv1a(listing), 0xb3a20ac0891b804aULL);
}

TEST(EnumerateSector, OrderingIsSpinThenColex)
{
    const SectorBasis b = enumerate_sector(4, 3);
    for (std::size_t j = 1; j < b.size(); ++j) {
        if (b.spins(j) != b.spins(j - 1)) {
            EXPECT_GT(b.spins(j), b.spins(j - 1));
            continue;
        }
        auto p = b.phonons(j - 1), q = b.phonons(j);
        EXPECT_TRUE(std::lexicographical_compare(p.rbegin(), p.rend(), q.rbegin(), q.rend()));
    }
}

TEST(EnumerateSector, CapExceeded)
{
    SectorLimits limits;
    limits.max_dimension = 1000;
    try {
        enumerate_sector(20, 3, limits);
        FAIL();
    } catch (const InfeasibleError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(sector_dimension(20, 3).str()), std::string::npos);
        EXPECT_NE(msg.find("1000"), std::string::npos);
    }
    EXPECT_THROW(enumerate_sector(32, 32), InfeasibleError);
}

TEST(IndexOf, RoundTrip)
{
    const SectorBasis b = enumerate_sector(4, 3);
    EXPECT_EQ(b.index_of(b.state(0)), 0u);
    for (std::size_t j = 0; j < b.size(); ++j) EXPECT_EQ(b.index_of(b.state(j)), j);
}

TEST(IndexOf, SectorMismatch)
{
    const SectorBasis b = enumerate_sector(3, 2);
    EXPECT_THROW(b.index_of(BasisState{0b001, {1, 1, 0}}), InputError);  // M+1
    EXPECT_THROW(b.index_of(BasisState{0b001, {1, 0}}), InputError);     // wrong N
    EXPECT_EQ(b.find(0b001, std::vector<std::uint8_t>{0, 0, 0}), SectorBasis::npos);
}

TEST(IndexOf, LargeChainFewExcitations)
{
    const SectorBasis b = enumerate_sector(32, 2);
    EXPECT_EQ(b.size(), 2048u);
    BasisState s{(1ULL << 31) | 1ULL, std::vector<std::uint8_t>(32, 0)};
    EXPECT_EQ(b.state(b.index_of(s)), s);
    EXPECT_EQ(b.state(b.size() - 1).spins, (1ULL << 31) | (1ULL << 30));
}
