#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jch/calibration.hpp"
#include "jch/error.hpp"
#include "jch/fock_basis.hpp"
#include "jch/hamiltonian.hpp"
#include "jch/io.hpp"
#include "jch/ion_chain.hpp"
#include "jch/propagator.hpp"
#include "jch/units.hpp"

namespace jch {

enum class GeometryKind { trap, spacings, spectrum };

/// One experiment run, in lab units. See README for the file grammar.
struct ExperimentConfig {
    std::string name = "experiment";
    unsigned n_ions = 0;
    std::optional<unsigned> excitations;
    std::vector<unsigned> excited_ions;

    GeometryKind geometry = GeometryKind::spacings;
    std::vector<double> spacings_um;
    double com_mode_mhz = 0.0;      // anchors wx to the top collective mode
    double transverse_mhz = 0.0;
    double axial_mhz = 0.0;
    double quartic = 0.0;
    std::filesystem::path spectrum_file;

    double g_khz = 0.0;
    double delta_khz = 0.0;
    std::vector<double> delta_scan_khz;
    unsigned observe_ion = 0;       // heat-map ion; 0 = mean over ions
    double waist_um = 162.0;        // <= 0 or inf: flat beam
    double beam_center_um = 0.0;
    double stark_khz = 0.0;
    bool include_eta = false;

    double time_us = 0.0;
    std::size_t samples = 201;
    Method method = Method::krylov;
    double krylov_tol = 1e-9;
    int krylov_dim = 40;
    double max_step_us = 0.0;
    std::size_t max_dimension = SectorLimits{}.max_dimension;

    std::filesystem::path output = "out";
    std::uint64_t seed = 1;         // spectrum-fit jitter; set from the command line
};

namespace detail {

inline bool parse_bool(std::string_view v, int line)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("expected true or false, got '" + std::string(v) + "'", line);
}

inline std::vector<double> parse_list(std::string_view v, int line)
{
    std::vector<double> out;
    for (auto f : io::split(v, ',')) out.push_back(io::parse_double(f, line));
    return out;
}

inline unsigned parse_unsigned(std::string_view v, int line, long long lo = 0)
{
    const long long x = io::parse_integer(v, line);
    if (x < lo || x > std::numeric_limits<unsigned>::max())
        throw InputError("value " + std::string(v) + " out of range", line);
    return static_cast<unsigned>(x);
}

}  // namespace detail

/// Parses the flat key=value format. A relative spectrum_file resolves against
/// `base_dir`; a relative output directory against the working directory.
inline ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir = {})
{
    ExperimentConfig c;
    std::set<std::string> seen;
    std::string raw;
    int line = 0;
    bool have_geometry = false, have_time = false, have_g = false, have_delta = false;
    while (std::getline(is, raw)) {
        ++line;
        std::string_view s = raw;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = io::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) throw InputError("expected key = value", line);
        const std::string key(io::trim(s.substr(0, eq)));
        const std::string_view v = io::trim(s.substr(eq + 1));
        if (key.empty()) throw InputError("empty key", line);
        if (v.empty()) throw InputError("key '" + key + "' has no value", line);
        if (!seen.insert(key).second) throw InputError("duplicate key '" + key + "'", line);

        if (key == "name") c.name = std::string(v);
        else if (key == "n_ions") c.n_ions = detail::parse_unsigned(v, line, 1);
        else if (key == "excitations") c.excitations = detail::parse_unsigned(v, line);
        else if (key == "excited_ions") {
            for (auto f : io::split(v, ',')) c.excited_ions.push_back(detail::parse_unsigned(f, line, 1));
        } else if (key == "geometry") {
            have_geometry = true;
            if (v == "trap") c.geometry = GeometryKind::trap;
            else if (v == "spacings") c.geometry = GeometryKind::spacings;
            else if (v == "spectrum") c.geometry = GeometryKind::spectrum;
            else throw InputError("geometry must be trap, spacings or spectrum", line);
        } else if (key == "spacings_um") c.spacings_um = detail::parse_list(v, line);
        else if (key == "com_mode_MHz") c.com_mode_mhz = io::parse_double(v, line);
        else if (key == "transverse_MHz") c.transverse_mhz = io::parse_double(v, line);
        else if (key == "axial_MHz") c.axial_mhz = io::parse_double(v, line);
        else if (key == "quartic") c.quartic = io::parse_double(v, line);
        else if (key == "spectrum_file") {
            c.spectrum_file = std::filesystem::path(std::string(v));
            if (c.spectrum_file.is_relative()) c.spectrum_file = base_dir / c.spectrum_file;
        } else if (key == "g_kHz") {
            c.g_khz = io::parse_double(v, line);
            have_g = true;
        } else if (key == "delta_kHz") {
            c.delta_khz = io::parse_double(v, line);
            have_delta = true;
        } else if (key == "delta_scan_kHz") c.delta_scan_khz = detail::parse_list(v, line);
        else if (key == "observe_ion") c.observe_ion = detail::parse_unsigned(v, line);
        else if (key == "waist_um") c.waist_um = v == "inf" ? std::numeric_limits<double>::infinity()
                                                            : io::parse_double(v, line);
        else if (key == "beam_center_um") c.beam_center_um = io::parse_double(v, line);
        else if (key == "stark_kHz") c.stark_khz = io::parse_double(v, line);
        else if (key == "include_eta") c.include_eta = detail::parse_bool(v, line);
        else if (key == "time_us") {
            c.time_us = io::parse_double(v, line);
            have_time = true;
        } else if (key == "samples") c.samples = detail::parse_unsigned(v, line, 2);
        else if (key == "method") {
            if (v == "krylov") c.method = Method::krylov;
            else if (v == "dense") c.method = Method::dense_oracle;
            else throw InputError("method must be krylov or dense", line);
        } else if (key == "krylov_tol") c.krylov_tol = io::parse_double(v, line);
        else if (key == "krylov_dim") c.krylov_dim = static_cast<int>(detail::parse_unsigned(v, line, 2));
        else if (key == "max_step_us") c.max_step_us = io::parse_double(v, line);
        else if (key == "max_dimension") c.max_dimension = detail::parse_unsigned(v, line, 1);
        else if (key == "output") c.output = std::filesystem::path(std::string(v));
        else throw InputError("unknown key '" + key + "'", line);
    }

    // Cross-field checks, reported against the end of the file.
    ++line;
    if (c.n_ions == 0) throw InputError("n_ions is required", line);
    if (c.n_ions > 64) throw InputError("n_ions must not exceed 64", line);
    if (!have_geometry) throw InputError("geometry is required", line);
    if (!have_g) throw InputError("g_kHz is required", line);
    if (!have_delta && c.delta_scan_khz.empty()) throw InputError("delta_kHz or delta_scan_kHz is required", line);
    if (!have_time || !(c.time_us > 0.0)) throw InputError("time_us must be given and positive", line);
    if (c.excited_ions.empty() && !c.excitations) throw InputError("excitations or excited_ions is required", line);
    if (c.observe_ion > c.n_ions) throw InputError("observe_ion exceeds n_ions", line);
    switch (c.geometry) {
    case GeometryKind::spacings:
        if (c.spacings_um.size() + 1 != c.n_ions)
            throw InputError("spacings_um needs n_ions - 1 entries", line);
        if (c.com_mode_mhz <= 0.0 && c.transverse_mhz <= 0.0)
            throw InputError("spacings geometry needs com_mode_MHz or transverse_MHz", line);
        break;
    case GeometryKind::trap:
        if (c.transverse_mhz <= 0.0 || c.axial_mhz <= 0.0)
            throw InputError("trap geometry needs transverse_MHz and axial_MHz", line);
        break;
    case GeometryKind::spectrum:
        if (c.spectrum_file.empty()) throw InputError("spectrum geometry needs spectrum_file", line);
        break;
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw InputError("cannot read config " + path.string());
    return parse_config(is, path.parent_path());
}

/// Every derived quantity of a run, in SI units.
struct ResolvedModel {
    TrapParameters trap;
    ChainGeometry geometry;
    ModeData modes;                 // absolute frequencies
    LaserProfile profile;
    SiteParameters sites;
    JchParameters params;           // interaction picture at wx
    unsigned excitations = 0;
    std::vector<unsigned> excited_ions;
    double spectrum_rms = -1.0;     // rad/s, only for spectrum geometry
};

/// Geometry, modes and the laser profile; independent of the detuning.
inline ResolvedModel resolve_chain(const ExperimentConfig& c)
{
    ResolvedModel m;
    switch (c.geometry) {
    case GeometryKind::spacings: {
        std::vector<double> d;
        for (double um : c.spacings_um) d.push_back(units::um_to_m(um));
        m.geometry = ChainGeometry::from_spacings(d);
        if (c.com_mode_mhz > 0.0)
            m.trap.transverse_frequency =
                anchor_transverse_frequency(m.trap, m.geometry, units::mhz_to_angular(c.com_mode_mhz));
        else
            m.trap.transverse_frequency = units::mhz_to_angular(c.transverse_mhz);
        break;
    }
    case GeometryKind::trap:
        m.trap.transverse_frequency = units::mhz_to_angular(c.transverse_mhz);
        m.trap.axial_frequency = units::mhz_to_angular(c.axial_mhz);
        m.trap.axial_quartic = c.quartic;
        m.geometry = equilibrium_positions(m.trap, c.n_ions);
        break;
    case GeometryKind::spectrum: {
        const std::vector<double> measured = io::read_spectrum_csv(c.spectrum_file);
        if (measured.size() != c.n_ions)
            throw InputError("spectrum file lists " + std::to_string(measured.size()) + " modes for " +
                             std::to_string(c.n_ions) + " ions");
        SpectrumFitOptions opt;
        opt.seed = c.seed;
        const SpectrumFit fit = fit_chain_from_spectrum(measured, suggest_trap_guess(measured), opt);
        m.trap = fit.trap;
        m.geometry = fit.geometry;
        m.spectrum_rms = fit.rms_residual;
        break;
    }
    }
    m.modes = mode_parameters(m.trap, m.geometry);

    const bool flat = !(c.waist_um > 0.0) || std::isinf(c.waist_um);
    m.profile.waist = flat ? std::numeric_limits<double>::infinity() : units::um_to_m(c.waist_um);
    m.profile.beam_center = units::um_to_m(c.beam_center_um);
    m.profile.stark_amplitude = units::khz_to_angular(c.stark_khz);

    if (!c.excited_ions.empty()) {
        m.excited_ions = c.excited_ions;
        m.excitations = c.excitations.value_or(static_cast<unsigned>(c.excited_ions.size()));
    } else {
        m.excitations = *c.excitations;
        if (m.excitations > c.n_ions)
            throw InfeasibleError("cannot start with " + std::to_string(m.excitations) + " spin excitations on " +
                                  std::to_string(c.n_ions) + " ions; list excited_ions");
        for (unsigned i = 1; i <= m.excitations; ++i) m.excited_ions.push_back(i);
    }
    return m;
}

/// Fills sites and params for central detuning `delta_khz`.
inline void resolve_sites(ResolvedModel& m, const ExperimentConfig& c, double delta_khz)
{
    SiteOptions opt;
    opt.include_eta_variation = c.include_eta;
    opt.local_frequencies = m.modes.corrected_local;
    m.sites = derive_site_parameters(m.profile, m.geometry, units::khz_to_angular(c.g_khz),
                                     units::khz_to_angular(delta_khz), opt);
    const ModeData shifted = interaction_picture_shift(m.modes, m.trap.transverse_frequency);
    m.params.detunings = m.sites.detunings;
    m.params.couplings = m.sites.couplings;
    m.params.local_frequencies = shifted.corrected_local;
    m.params.hoppings = shifted.corrected_hopping;
}

inline ResolvedModel resolve_model(const ExperimentConfig& c)
{
    ResolvedModel m = resolve_chain(c);
    resolve_sites(m, c, c.delta_khz);
    return m;
}

inline EvolutionRequest make_request(const ExperimentConfig& c, const ResolvedModel& m)
{
    EvolutionRequest r;
    r.excited_ions = m.excited_ions;
    r.total_time = units::us_to_s(c.time_us);
    r.samples = c.samples;
    r.method = c.method;
    r.krylov_tolerance = c.krylov_tol;
    r.max_krylov_dimension = c.krylov_dim;
    r.max_step = units::us_to_s(c.max_step_us);
    return r;
}

/// Sector basis under the configured cap; the error message reports D.
inline SectorBasis build_sector(const ExperimentConfig& c, const ResolvedModel& m)
{
    SectorLimits limits;
    limits.max_dimension = c.max_dimension;
    return enumerate_sector(c.n_ions, m.excitations, limits);
}

// ---------------------------------------------------------------------------
// Reports

inline io::Report describe_model(const ExperimentConfig& c, const ResolvedModel& m, const SectorBasis& basis)
{
    using namespace units;
    io::Report r;
    const double wx = m.trap.transverse_frequency;
    r.add("name", c.name);
    r.add("n_ions", c.n_ions);
    r.add("excitations", m.excitations);
    std::string ions;
    for (std::size_t i = 0; i < m.excited_ions.size(); ++i) ions += (i ? "," : "") + std::to_string(m.excited_ions[i]);
    r.add("excited_ions", ions);
    r.add("sector_dimension", basis.size());
    r.add("geometry_source", to_string(m.geometry.source));
    r.add("transverse_frequency_MHz", angular_to_mhz(wx));
    if (m.trap.axial_frequency > 0.0) {
        r.add("axial_frequency_MHz", angular_to_mhz(m.trap.axial_frequency));
        r.add("axial_quartic", m.trap.axial_quartic);
    }
    if (m.spectrum_rms >= 0.0) r.add("spectrum_fit_rms_kHz", angular_to_khz(m.spectrum_rms));
    std::vector<double> pos, gap, modes;
    for (double z : m.geometry.positions) pos.push_back(m_to_um(z));
    for (double d : m.geometry.spacings()) gap.push_back(m_to_um(d));
    for (Eigen::Index k = 0; k < m.modes.collective_frequencies.size(); ++k)
        modes.push_back(angular_to_khz(m.modes.collective_frequencies[k] - wx));
    r.add("positions_um", pos);
    r.add("spacings_um", gap);
    r.add("collective_modes_kHz", modes);
    r.add("beam_waist_um", std::isinf(m.profile.waist) ? std::string("inf") : io::format_double(m_to_um(m.profile.waist)));
    r.add("beam_center_um", m_to_um(m.profile.beam_center));
    r.add("stark_amplitude_kHz", angular_to_khz(m.profile.stark_amplitude));
    r.add("include_eta_variation", std::string(c.include_eta ? "true" : "false"));
    r.add("time_us", c.time_us);
    r.add("samples", c.samples);
    r.add("method", std::string(to_string(c.method)));
    r.add("krylov_tol", c.krylov_tol);
    r.add("krylov_dim", static_cast<std::size_t>(c.krylov_dim));
    r.add("max_step_us", c.max_step_us);
    const auto n = static_cast<Eigen::Index>(c.n_ions);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::string s = std::to_string(i + 1);
        r.add("g_kHz_ion" + s, angular_to_khz(m.params.couplings[i]));
        r.add("delta_kHz_ion" + s, angular_to_khz(m.params.detunings[i]));
        r.add("omega_tilde_kHz_ion" + s, angular_to_khz(m.params.local_frequencies[i]));
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            r.add("t_tilde_kHz_" + std::to_string(i + 1) + "_" + std::to_string(j + 1),
                  angular_to_khz(m.params.hoppings(i, j)));
    return r;
}

/// Mode-scale summary for `calibrate --spectrum`.
inline io::Report describe_spectrum_fit(const SpectrumFit& fit)
{
    using namespace units;
    io::Report r;
    const double wx = fit.trap.transverse_frequency;
    r.add("n_ions", fit.geometry.size());
    r.add("transverse_frequency_MHz", angular_to_mhz(wx));
    r.add("axial_frequency_MHz", angular_to_mhz(fit.trap.axial_frequency));
    r.add("axial_quartic", fit.trap.axial_quartic);
    r.add("rms_residual_kHz", angular_to_khz(fit.rms_residual));
    r.add("converged", std::string(fit.converged ? "true" : "false"));
    r.add("best_start", static_cast<std::size_t>(fit.best_start));
    std::vector<double> gap, modes, local;
    for (double d : fit.geometry.spacings()) gap.push_back(m_to_um(d));
    for (Eigen::Index k = 0; k < fit.modes.collective_frequencies.size(); ++k) {
        modes.push_back(angular_to_mhz(fit.modes.collective_frequencies[k]));
        local.push_back(angular_to_khz(fit.modes.corrected_local[k] - wx));
    }
    r.add("spacings_um", gap);
    r.add("collective_modes_MHz", modes);
    r.add("omega_tilde_kHz", local);
    return r;
}

inline io::Report describe_beam_fit(const BeamFit& fit)
{
    using namespace units;
    io::Report r;
    r.add("flat", std::string(fit.flat ? "true" : "false"));
    r.add("peak_rabi_kHz", angular_to_khz(fit.profile.peak_rabi));
    r.add("waist_um", fit.flat ? std::string("inf") : io::format_double(m_to_um(fit.profile.waist)));
    r.add("beam_center_um", m_to_um(fit.profile.beam_center));
    r.add("rms_residual_kHz", angular_to_khz(fit.rms_residual));
    return r;
}

// ---------------------------------------------------------------------------
// Runs

struct RunSummary {
    std::size_t dimension = 0;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline std::string delta_tag(double khz)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "delta_%+.3f", khz);
    return buf;
}

}  // namespace detail

/// Single run or a detuning scan. Writes timeseries.csv, modes.csv,
/// hopping.csv, params.txt and plot.svg into c.output; a scan writes one
/// timeseries_<delta>.csv per detuning plus heatmap.csv.
inline RunSummary run_experiment(const ExperimentConfig& c)
{
    RunSummary out;
    ResolvedModel model = resolve_chain(c);
    const SectorBasis basis = build_sector(c, model);
    out.dimension = basis.size();
    const EvolutionRequest req = make_request(c, model);
    const double wx = model.trap.transverse_frequency;
    const std::filesystem::path dir = c.output;

    auto emit = [&](const std::string& file, const std::function<void(std::ostream&)>& body) {
        io::write_atomically(dir / file, body);
        out.files.push_back(dir / file);
    };

    emit("modes.csv", [&](std::ostream& os) { io::write_modes_csv(os, model.modes, wx); });
    emit("hopping.csv", [&](std::ostream& os) {
        io::write_matrix_csv(os, interaction_picture_shift(model.modes, wx).corrected_hopping);
    });

    if (c.delta_scan_khz.empty()) {
        resolve_sites(model, c, c.delta_khz);
        const SparseHamiltonian h = build_hamiltonian(model.params, basis);
        const TimeSeries series = evolve(h, req, basis);
        emit("params.txt", [&](std::ostream& os) { describe_model(c, model, basis).write(os); });
        emit("timeseries.csv", [&](std::ostream& os) { write_timeseries_csv(os, series); });
        emit("plot.svg", [&](std::ostream& os) { io::write_svg_plot(os, series, c.name); });
        return out;
    }

    // Detuning scan: independent evolutions, one per detuning.
    const auto n_scan = static_cast<std::int64_t>(c.delta_scan_khz.size());
    std::vector<TimeSeries> results(c.delta_scan_khz.size());
    std::vector<ResolvedModel> models(c.delta_scan_khz.size(), model);
    std::vector<std::exception_ptr> errors(c.delta_scan_khz.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < n_scan; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        try {
            resolve_sites(models[ku], c, c.delta_scan_khz[ku]);
            const SparseHamiltonian h = build_hamiltonian(models[ku].params, basis);
            results[ku] = evolve(h, req, basis);
        } catch (...) {
            errors[ku] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    emit("params.txt", [&](std::ostream& os) {
        io::Report scan = describe_model(c, models.front(), basis);
        scan.add("delta_scan_kHz", c.delta_scan_khz);
        scan.write(os);
    });
    for (std::size_t k = 0; k < results.size(); ++k)
        emit("timeseries_" + detail::delta_tag(c.delta_scan_khz[k]) + ".csv",
             [&](std::ostream& os) { write_timeseries_csv(os, results[k]); });
    emit("heatmap.csv", [&](std::ostream& os) {
        os << "time_us,delta_kHz," << (c.observe_ion ? "sz_ion" + std::to_string(c.observe_ion) : "sz_mean") << '\n';
        char buf[96];
        for (std::size_t k = 0; k < results.size(); ++k) {
            const TimeSeries& s = results[k];
            const std::vector<double> avg = average_sigma_z(s);
            for (std::size_t t = 0; t < s.samples(); ++t) {
                const double v = c.observe_ion ? s.sigma_z(static_cast<Eigen::Index>(t), c.observe_ion - 1) : avg[t];
                std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.12e\n", units::s_to_us(s.times[t]), c.delta_scan_khz[k], v);
                os << buf;
            }
        }
    });
    emit("plot.svg", [&](std::ostream& os) { io::write_svg_plot(os, results.front(), c.name); });
    return out;
}

}  // namespace jch
