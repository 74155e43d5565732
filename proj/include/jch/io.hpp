#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "jch/error.hpp"
#include "jch/ion_chain.hpp"
#include "jch/propagator.hpp"
#include "jch/units.hpp"

namespace jch::io {

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, int line = 0)
{
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw InputError("expected a number, got '" + std::string(s) + "'", line);
    return v;
}

inline long long parse_integer(std::string_view s, int line = 0)
{
    s = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw InputError("expected an integer, got '" + std::string(s) + "'", line);
    return v;
}

/// Formats with enough digits to round-trip a double.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes through a temporary sibling file and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    try {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        body(os);
        os.flush();
        if (!os) throw Error("write to " + tmp.string() + " failed");
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// CSV tables with a header row; columns are looked up by name.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> row_lines;  // 1-based source line of each row

    std::size_t column(const std::string& name) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InputError("CSV is missing column '" + name + "'", 1);
        return static_cast<std::size_t>(it - header.begin());
    }

    std::vector<double> numbers(const std::string& name) const
    {
        const std::size_t c = column(name);
        std::vector<double> out;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (c >= rows[r].size()) throw InputError("row has too few fields", row_lines[r]);
            out.push_back(parse_double(rows[r][c], row_lines[r]));
        }
        return out;
    }
};

inline CsvTable parse_csv(std::istream& is)
{
    CsvTable t;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const auto s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        std::vector<std::string> fields;
        for (auto f : split(s, ',')) fields.emplace_back(f);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            t.rows.push_back(std::move(fields));
            t.row_lines.push_back(n);
        }
    }
    if (t.header.empty()) throw InputError("CSV is empty");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw InputError("cannot read " + path.string());
    return parse_csv(is);
}

/// Measured collective modes: columns index, frequency_MHz. Returns rad/s.
inline std::vector<double> read_spectrum_csv(const std::filesystem::path& path)
{
    std::vector<double> w;
    for (double mhz : read_csv(path).numbers("frequency_MHz")) w.push_back(units::mhz_to_angular(mhz));
    return w;
}

struct RabiTable {
    std::vector<double> positions;  // m
    std::vector<double> rabi;       // rad/s
};

/// Carrier Rabi frequencies: columns index, position_um, rabi_kHz.
inline RabiTable read_rabi_csv(const std::filesystem::path& path)
{
    const CsvTable t = read_csv(path);
    RabiTable r;
    for (double um : t.numbers("position_um")) r.positions.push_back(units::um_to_m(um));
    for (double khz : t.numbers("rabi_kHz")) r.rabi.push_back(units::khz_to_angular(khz));
    return r;
}

// ---------------------------------------------------------------------------
// Mode tables

/// ion_index, omega_i_kHz, omega_tilde_i_kHz, both relative to `reference`.
inline void write_modes_csv(std::ostream& os, const ModeData& modes, double reference)
{
    os << "ion_index,omega_i_kHz,omega_tilde_i_kHz\n";
    char buf[96];
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", i + 1,
                      units::angular_to_khz(modes.local_frequencies[e] - reference),
                      units::angular_to_khz(modes.corrected_local[e] - reference));
        os << buf;
    }
}

/// Square matrix in kHz, one row per line, with an ion-index header.
inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m)
{
    os << "ion";
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ",ion" << j + 1;
    os << '\n';
    char buf[48];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << i + 1;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.6f", units::angular_to_khz(m(i, j)));
            os << buf;
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Flat key=value reports

class Report {
public:
    void add(const std::string& key, const std::string& value) { lines_.emplace_back(key, value); }
    void add(const std::string& key, double value) { add(key, format_double(value)); }
    void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, unsigned value) { add(key, std::to_string(value)); }
    void add(const std::string& key, const std::vector<double>& values)
    {
        std::string s;
        for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_double(values[i]);
        add(key, s);
    }

    void write(std::ostream& os) const
    {
        for (const auto& [k, v] : lines_) os << k << '=' << v << '\n';
    }

    const std::vector<std::pair<std::string, std::string>>& lines() const { return lines_; }

private:
    std::vector<std::pair<std::string, std::string>> lines_;
};

// ---------------------------------------------------------------------------
// SVG plot of <sigma_z^i(t)>, one polyline per ion.

inline void write_svg_plot(std::ostream& os, const TimeSeries& series, const std::string& title)
{
    constexpr double width = 800, height = 420, left = 60, right = 20, top = 40, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    const double t_max = series.times.empty() ? 1.0 : std::max(series.times.back(), 1e-300);
    auto px = [&](double t) { return left + pw * t / t_max; };
    auto py = [&](double v) { return top + ph * (1.0 - v) / 2.0; };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    char buf[160];

    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%.0f\" height=\"%.0f\">\n", width,
                  height);
    os << buf;
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << title << "</text>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", left,
                  top, pw, ph);
    os << buf;
    for (double v : {-1.0, 0.0, 1.0}) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%+.0f</text>\n",
                      left - 6, py(v) + 4, v);
        os << buf;
    }
    for (int k = 0; k <= 4; ++k) {
        const double t = t_max * k / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%.0f</text>\n",
                      px(t), top + ph + 18, units::s_to_us(t));
        os << buf;
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">time (us)</text>\n";
    os << "<text x=\"16\" y=\"" << top + ph / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
       << top + ph / 2 << ")\">&lt;sigma_z&gt;</text>\n";

    for (std::size_t i = 0; i < series.n_ions(); ++i) {
        os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colours[i % 10] << "\" points=\"";
        for (std::size_t k = 0; k < series.samples(); ++k) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", px(series.times[k]),
                          py(series.sigma_z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i))));
            os << buf;
        }
        os << "\"><title>ion " << i + 1 << "</title></polyline>\n";
    }
    os << "</svg>\n";
}

}  // namespace jch::io
