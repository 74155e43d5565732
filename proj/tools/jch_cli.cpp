// jch: run JCH experiments, count sectors, calibrate chains.

#include <cstdio>
#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "jch/calibration.hpp"
#include "jch/experiment.hpp"
#include "jch/fock_basis.hpp"
#include "jch/io.hpp"

namespace {

enum ExitCode { ok = 0, failure = 1, parse_error = 2, infeasible = 3, numerical = 4 };

int run_simulate(const std::string& config_path, const std::string& output, std::uint64_t seed)
{
    jch::ExperimentConfig c = jch::load_config(config_path);
    if (!output.empty()) c.output = output;
    c.seed = seed;
    const jch::RunSummary s = jch::run_experiment(c);
    std::cout << "name=" << c.name << "\nsector_dimension=" << s.dimension << '\n';
    for (const auto& f : s.files) std::cout << "wrote=" << f.string() << '\n';
    return ok;
}

int run_dimension(unsigned n, unsigned m)
{
    const jch::BigInt d = jch::sector_dimension(n, m);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", jch::log2(d));
    std::cout << "N=" << n << "\nM=" << m << "\ndimension=" << d.str() << "\nlog2_dimension=" << buf << '\n';
    return ok;
}

int run_calibrate_spectrum(const std::string& path, std::uint64_t seed)
{
    const std::vector<double> measured = jch::io::read_spectrum_csv(path);
    jch::SpectrumFitOptions opt;
    opt.seed = seed;
    const jch::SpectrumFit fit = jch::fit_chain_from_spectrum(measured, jch::suggest_trap_guess(measured), opt);
    jch::describe_spectrum_fit(fit).write(std::cout);
    return ok;
}

int run_calibrate_rabi(const std::string& path)
{
    const jch::io::RabiTable t = jch::io::read_rabi_csv(path);
    jch::describe_beam_fit(jch::fit_beam_profile(t.positions, t.rabi)).write(std::cout);
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Jaynes-Cummings-Hubbard simulator for trapped-ion chains"};
    app.require_subcommand(1);
    int threads = 0;
    std::uint64_t seed = 1;
    app.add_option("--threads", threads, "worker threads for matrix-vector products (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "seed for multi-start fit jitter");

    std::string config, output;
    auto* simulate = app.add_subcommand("simulate", "run an experiment config");
    simulate->add_option("config", config, "key=value config file")->required();
    simulate->add_option("--output", output, "override the config's output directory");

    unsigned n = 0, m = 0;
    auto* dimension = app.add_subcommand("dimension", "print the sector dimension D(N, M)");
    dimension->add_option("N", n, "number of ions")->required();
    dimension->add_option("M", m, "excitation number")->required();

    std::string spectrum, rabi;
    auto* calibrate = app.add_subcommand("calibrate", "fit a chain or beam profile to measured data");
    auto* spec_opt = calibrate->add_option("--spectrum", spectrum, "CSV with columns index,frequency_MHz");
    auto* rabi_opt = calibrate->add_option("--rabi", rabi, "CSV with columns index,position_um,rabi_kHz");
    spec_opt->excludes(rabi_opt);
    calibrate->require_option(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : parse_error;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (*simulate) return run_simulate(config, output, seed);
        if (*dimension) return run_dimension(n, m);
        if (*calibrate) return spectrum.empty() ? run_calibrate_rabi(rabi) : run_calibrate_spectrum(spectrum, seed);
    } catch (const jch::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return parse_error;
    } catch (const jch::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return infeasible;
    } catch (const jch::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return failure;
}
