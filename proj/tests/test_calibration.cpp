#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "jch/calibration.hpp"
#include "reference_chains.hpp"

using namespace jch;
using units::khz_to_angular;
using units::mhz_to_angular;
using units::m_to_um;
using units::um_to_m;

namespace {

std::vector<double> measured_modes(const reference::ReferenceChain& c)
{
    std::vector<double> w;
    for (double mhz : c.modes_mhz) w.push_back(mhz_to_angular(mhz));
    return w;
}

SpectrumFit fit_reference(const reference::ReferenceChain& c)
{
    const std::vector<double> w = measured_modes(c);
    return fit_chain_from_spectrum(w, suggest_trap_guess(w));
}

std::vector<double> collective(const TrapParameters& trap, std::size_t n)
{
    const ModeData m = mode_parameters(trap, equilibrium_positions(trap, n));
    return {m.collective_frequencies.data(), m.collective_frequencies.data() + m.collective_frequencies.size()};
}

LaserProfile gaussian(double waist_um, double center_um = 0.0)
{
    LaserProfile p;
    p.peak_rabi = khz_to_angular(250.0);
    p.waist = um_to_m(waist_um);
    p.beam_center = um_to_m(center_um);
    return p;
}

ChainGeometry uniform_chain(std::size_t n, double length_um)
{
    std::vector<double> d(n - 1, um_to_m(length_um / static_cast<double>(n - 1)));
    return ChainGeometry::from_spacings(d);
}

}  // namespace

TEST(FitChainFromSpectrum, TwoIons)
{
    const SpectrumFit fit = fit_reference(reference::reference_chain(2));
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(m_to_um(fit.geometry.spacings()[0]), 5.280, 0.05);
    EXPECT_EQ(fit.geometry.source, GeometrySource::fitted_from_spectrum);
}

TEST(FitChainFromSpectrum, FourIons)
{
    for (bool scan : {false, true}) {
        const auto& ref = reference::reference_chain(4, scan);
        const SpectrumFit fit = fit_reference(ref);
        const auto gaps = fit.geometry.spacings();
        for (std::size_t i = 0; i < gaps.size(); ++i)
            EXPECT_NEAR(m_to_um(gaps[i]), ref.spacings_um[i], 0.05) << ref.label << " gap " << i + 1;
        EXPECT_LT(fit.rms_residual, khz_to_angular(0.5));
    }
}

TEST(FitChainFromSpectrum, TwentyIonsInterior)
{
    // The 1 kHz resolution of the tabulated modes pins the interior spacings
    // but lets the outermost gaps move by a few tenths of a micron.
    const auto& ref = reference::reference_chain(20);
    const SpectrumFit fit = fit_reference(ref);
    const auto gaps = fit.geometry.spacings();
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double tol = (i == 0 || i + 1 == gaps.size()) ? 0.3 : 0.1;
        EXPECT_NEAR(m_to_um(gaps[i]), ref.spacings_um[i], tol) << "gap " << i + 1;
    }
    EXPECT_LT(fit.rms_residual, khz_to_angular(0.5));
}

TEST(FitChainFromSpectrum, SyntheticRoundTrip)
{
    TrapParameters truth;
    truth.transverse_frequency = mhz_to_angular(2.76);
    truth.axial_frequency = mhz_to_angular(0.21);
    truth.axial_quartic = 0.08;
    const std::vector<double> spectrum = collective(truth, 6);

    TrapParameters guess = suggest_trap_guess(spectrum);
    const SpectrumFit fit = fit_chain_from_spectrum(spectrum, guess);
    EXPECT_LT(fit.rms_residual, khz_to_angular(1e-3));
    EXPECT_NEAR(fit.trap.axial_frequency / truth.axial_frequency, 1.0, 1e-3);
    EXPECT_NEAR(fit.trap.axial_quartic, truth.axial_quartic, 1e-3);
    const std::vector<double> again = collective(fit.trap, 6);
    for (std::size_t k = 0; k < spectrum.size(); ++k) EXPECT_NEAR(again[k] / spectrum[k], 1.0, 1e-3);
}

TEST(FitChainFromSpectrum, HistoryIsMonotone)
{
    const SpectrumFit fit = fit_reference(reference::reference_chain(8));
    ASSERT_FALSE(fit.history.empty());
    for (std::size_t k = 1; k < fit.history.size(); ++k) EXPECT_LE(fit.history[k], fit.history[k - 1]);
    EXPECT_DOUBLE_EQ(fit.history.back(), fit.rms_residual);
}

TEST(FitChainFromSpectrum, SeedOnlyMovesJitter)
{
    const std::vector<double> w = measured_modes(reference::reference_chain(4));
    SpectrumFitOptions a, b;
    b.seed = 99;
    const SpectrumFit fa = fit_chain_from_spectrum(w, suggest_trap_guess(w), a);
    const SpectrumFit fa2 = fit_chain_from_spectrum(w, suggest_trap_guess(w), a);
    const SpectrumFit fb = fit_chain_from_spectrum(w, suggest_trap_guess(w), b);
    EXPECT_EQ(fa.geometry.positions, fa2.geometry.positions);
    EXPECT_NEAR(m_to_um(fa.geometry.spacings()[1]), m_to_um(fb.geometry.spacings()[1]), 0.01);
}

TEST(FitChainFromSpectrum, ImpossibleSpectrumFails)
{
    const std::vector<double> w = {mhz_to_angular(2.30), mhz_to_angular(2.72), mhz_to_angular(2.721)};
    try {
        fit_chain_from_spectrum(w, suggest_trap_guess(w));
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_GT(e.residual(), 1.0);
    }
}

TEST(FitBeamProfile, RecoversWaist)
{
    const LaserProfile truth = gaussian(162.0, 3.0);
    std::vector<double> z, r;
    for (int i = -15; i <= 15; ++i) {
        z.push_back(um_to_m(3.3 * i));
        r.push_back(truth.rabi_at(z.back()));
    }
    const BeamFit fit = fit_beam_profile(z, r);
    EXPECT_FALSE(fit.flat);
    EXPECT_NEAR(m_to_um(fit.profile.waist), 162.0, 1.0);
    EXPECT_NEAR(m_to_um(fit.profile.beam_center), 3.0, 0.1);
    EXPECT_NEAR(fit.profile.peak_rabi / truth.peak_rabi, 1.0, 1e-6);
    EXPECT_EQ(fit.profile.stark_amplitude, 0.0);
}

TEST(FitBeamProfile, UniformIsFlat)
{
    std::vector<double> z, r;
    for (int i = 0; i < 10; ++i) {
        z.push_back(um_to_m(5.0 * i));
        r.push_back(khz_to_angular(100.0));
    }
    const BeamFit fit = fit_beam_profile(z, r);
    EXPECT_TRUE(fit.flat);
    EXPECT_TRUE(std::isinf(fit.profile.waist));
    EXPECT_NEAR(fit.profile.peak_rabi, khz_to_angular(100.0), 1e-9 * khz_to_angular(100.0));
}

TEST(FitBeamProfile, DegenerateData)
{
    EXPECT_THROW(fit_beam_profile({1e-6, 1e-6, 1e-6}, {1.0, 2.0, 3.0}), InputError);
    EXPECT_THROW(fit_beam_profile({1e-6, 2e-6}, {1.0, 2.0, 3.0}), InputError);
}

TEST(FitBeamProfile, NoisyMonteCarlo)
{
    // 31 positions over ~100 um with 5% multiplicative noise; median over 100 trials.
    const LaserProfile truth = gaussian(162.0);
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<double> waists;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z, r;
        for (int i = 0; i < 31; ++i) {
            z.push_back(um_to_m(-50.0 + 100.0 * i / 30.0));
            r.push_back(truth.rabi_at(z.back()) * (1.0 + noise(rng)));
        }
        const BeamFit fit = fit_beam_profile(z, r);
        waists.push_back(fit.flat ? std::numeric_limits<double>::infinity() : m_to_um(fit.profile.waist));
    }
    std::nth_element(waists.begin(), waists.begin() + 50, waists.end());
    const double median = waists[50];
    RecordProperty("median_waist_um", std::to_string(median));
    EXPECT_NEAR(median, 162.0, 16.2);
}

TEST(DeriveSiteParameters, SingleIon)
{
    LaserProfile p = gaussian(162.0);
    p.stark_amplitude = khz_to_angular(-3.0);
    const SiteParameters s =
        derive_site_parameters(p, ChainGeometry::from_spacings({}), khz_to_angular(12.0), khz_to_angular(-20.0));
    EXPECT_EQ(s.couplings[0], khz_to_angular(12.0));
    EXPECT_EQ(s.detunings[0], khz_to_angular(-20.0));
}

TEST(DeriveSiteParameters, EdgeOfHundredMicronChain)
{
    const ChainGeometry g = uniform_chain(21, 100.0);
    const SiteParameters s = derive_site_parameters(gaussian(162.0), g, 1.0, 0.0);
    const double expected = std::exp(-2.0 * 50.0 * 50.0 / (162.0 * 162.0));
    EXPECT_NEAR(expected, 0.826, 1e-3);
    EXPECT_NEAR(s.couplings[0], expected, 1e-12);
    EXPECT_NEAR(s.couplings[20], expected, 1e-12);
    EXPECT_EQ(s.couplings[10], 1.0);
}

TEST(DeriveSiteParameters, EvenChainMirrorSymmetric)
{
    const auto& ref = reference::reference_chain(20);
    std::vector<double> d;
    for (double um : ref.spacings_um) d.push_back(um_to_m(um));
    LaserProfile p = gaussian(162.0);
    p.stark_amplitude = khz_to_angular(4.0);
    const SiteParameters s = derive_site_parameters(p, ChainGeometry::from_spacings(d), khz_to_angular(10.0), 0.0);
    for (Eigen::Index i = 0; i < 20; ++i) {
        EXPECT_EQ(s.couplings[i], s.couplings[19 - i]);
        EXPECT_EQ(s.detunings[i], s.detunings[19 - i]);
        // Reference point is the beam centre, so every ion sits below it.
        EXPECT_LT(s.couplings[i], khz_to_angular(10.0));
        EXPECT_LT(s.detunings[i], 0.0);
    }
}

TEST(DeriveSiteParameters, StarkShiftSign)
{
    const ChainGeometry g = uniform_chain(5, 40.0);
    for (double d0 : {-5.0, 5.0}) {
        LaserProfile p = gaussian(162.0);
        p.stark_amplitude = khz_to_angular(d0);
        const SiteParameters s = derive_site_parameters(p, g, 1.0, khz_to_angular(-15.0));
        EXPECT_EQ(s.detunings[2], khz_to_angular(-15.0));
        for (Eigen::Index i : {0, 1, 3, 4}) {
            const double profile_diff = p.envelope(g.positions[static_cast<std::size_t>(i)]) *
                                            p.envelope(g.positions[static_cast<std::size_t>(i)]) -
                                        1.0;
            EXPECT_GT((s.detunings[i] - khz_to_angular(-15.0)) * d0 * profile_diff, 0.0);
        }
    }
}

TEST(DeriveSiteParameters, FlatBeamAndEtaVariation)
{
    const ChainGeometry g = uniform_chain(3, 10.0);
    LaserProfile flat;
    flat.waist = std::numeric_limits<double>::infinity();
    SiteOptions opt;
    opt.include_eta_variation = true;
    opt.local_frequencies = Eigen::Vector3d(4.0, 1.0, 9.0);
    const SiteParameters s = derive_site_parameters(flat, g, 2.0, 0.0, opt);
    EXPECT_DOUBLE_EQ(s.couplings[0], 1.0);
    EXPECT_DOUBLE_EQ(s.couplings[1], 2.0);
    EXPECT_DOUBLE_EQ(s.couplings[2], 2.0 / 3.0);
    EXPECT_THROW(derive_site_parameters(flat, g, 0.0, 0.0), InputError);
}
