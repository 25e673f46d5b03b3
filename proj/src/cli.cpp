#include "kslab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kslab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void config_fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& key, const std::string& value, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        config_fail(line, "field '" + key + "': cannot parse number from '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value, int line) {
    const double v = parse_double(key, value, line);
    if (v != std::floor(v)) config_fail(line, "field '" + key + "': expected an integer");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    config_fail(line, "field '" + key + "': expected true or false");
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') config_fail(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "domain" && section != "coefficients" && section != "terminal" &&
                section != "metric" && section != "solver" && section != "run")
                config_fail(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) config_fail(line, "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (section.empty()) config_fail(line, "key '" + key + "' outside any section");

        if (section == "domain") {
            if (key == "lower") cfg.lower = parse_double(key, value, line);
            else if (key == "upper") cfg.upper = parse_double(key, value, line);
            else if (key == "n") cfg.n = parse_int(key, value, line);
            else if (key == "boundary") {
                try {
                    cfg.boundary = boundary_mode_from_string(value);
                } catch (const UsageError& e) {
                    config_fail(line, e.what());
                }
            } else config_fail(line, "unknown key '" + key + "' in [domain]");
        } else if (section == "coefficients") {
            if (key == "preset") cfg.preset = value;
            else cfg.params[key] = parse_double(key, value, line);
        } else if (section == "terminal") {
            if (key == "preset") cfg.phi = value;
            else if (key == "value") cfg.phi_value = parse_double(key, value, line);
            else if (key == "center") cfg.phi_center = parse_double(key, value, line);
            else config_fail(line, "unknown key '" + key + "' in [terminal]");
        } else if (section == "metric") {
            if (key == "m") cfg.family_size = parse_int(key, value, line);
            else config_fail(line, "unknown key '" + key + "' in [metric]");
        } else if (section == "solver") {
            if (key == "dt") cfg.dt = parse_double(key, value, line);
            else if (key == "t0") cfg.t0 = parse_double(key, value, line);
            else if (key == "T") cfg.T = parse_double(key, value, line);
            else if (key == "paths") cfg.paths = parse_int(key, value, line);
            else if (key == "particles") cfg.particles = parse_int(key, value, line);
            else if (key == "ess_threshold") cfg.ess_threshold = parse_double(key, value, line);
            else if (key == "initial") cfg.initial = value;
            else if (key == "bump_center") cfg.bump_center = parse_double(key, value, line);
            else if (key == "bump_amp") cfg.bump_amp = parse_double(key, value, line);
            else config_fail(line, "unknown key '" + key + "' in [solver]");
        } else { // run
            if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_double(key, value, line));
            else if (key == "out") cfg.out_dir = value;
            else if (key == "workers") cfg.workers = parse_int(key, value, line);
            else if (key == "override_stability") cfg.override_stability = parse_bool(key, value, line);
            else if (key == "replicas") cfg.replicas = parse_int(key, value, line);
            else config_fail(line, "unknown key '" + key + "' in [run]");
        }
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

namespace {

std::string config_text_impl(const ExperimentConfig& cfg, bool with_execution_fields);

} // namespace

std::string canonical_text(const ExperimentConfig& cfg) { return config_text_impl(cfg, true); }

std::string numeric_identity_text(const ExperimentConfig& cfg) {
    return config_text_impl(cfg, false);
}

namespace {

std::string config_text_impl(const ExperimentConfig& cfg, bool with_execution_fields) {
    std::ostringstream os;
    os << "[domain]\n";
    os << "lower = " << fmt_double(cfg.lower) << "\n";
    os << "upper = " << fmt_double(cfg.upper) << "\n";
    os << "n = " << cfg.n << "\n";
    os << "boundary = " << to_string(cfg.boundary) << "\n";
    os << "[coefficients]\n";
    os << "preset = " << cfg.preset << "\n";
    for (const auto& [k, v] : cfg.params) os << k << " = " << fmt_double(v) << "\n";
    os << "[terminal]\n";
    os << "preset = " << cfg.phi << "\n";
    os << "value = " << fmt_double(cfg.phi_value) << "\n";
    os << "center = " << fmt_double(cfg.phi_center) << "\n";
    os << "[metric]\n";
    os << "m = " << cfg.family_size << "\n";
    os << "[solver]\n";
    os << "dt = " << fmt_double(cfg.dt) << "\n";
    os << "t0 = " << fmt_double(cfg.t0) << "\n";
    os << "T = " << fmt_double(cfg.T) << "\n";
    os << "paths = " << cfg.paths << "\n";
    os << "particles = " << cfg.particles << "\n";
    os << "ess_threshold = " << fmt_double(cfg.ess_threshold) << "\n";
    os << "initial = " << cfg.initial << "\n";
    os << "bump_center = " << fmt_double(cfg.bump_center) << "\n";
    os << "bump_amp = " << fmt_double(cfg.bump_amp) << "\n";
    os << "[run]\n";
    os << "seed = " << cfg.seed << "\n";
    if (with_execution_fields) {
        os << "out = " << cfg.out_dir << "\n";
        os << "workers = " << cfg.workers << "\n";
    }
    os << "override_stability = " << (cfg.override_stability ? "true" : "false") << "\n";
    os << "replicas = " << cfg.replicas << "\n";
    return os.str();
}

} // namespace

void validate_config(const ExperimentConfig& cfg) {
    if (!(cfg.upper > cfg.lower)) throw ConfigError("domain.upper must exceed domain.lower");
    if (cfg.n < 2) throw ConfigError("domain.n must be at least 2");
    if (!(cfg.dt > 0.0)) throw ConfigError("solver.dt must be positive");
    if (!(cfg.T > cfg.t0)) throw ConfigError("solver.T must exceed solver.t0");
    if (cfg.paths < 2) throw ConfigError("solver.paths must be at least 2");
    if (cfg.particles < 2) throw ConfigError("solver.particles must be at least 2");
    if (cfg.ess_threshold < 0.0 || cfg.ess_threshold > 1.0)
        throw ConfigError("solver.ess_threshold must lie in [0, 1]");
    if (cfg.family_size < 1) throw ConfigError("metric.m must be at least 1");
    if (cfg.workers < 1) throw ConfigError("run.workers must be at least 1");
    if (cfg.replicas < 2) throw ConfigError("run.replicas must be at least 2");
    if (cfg.initial != "uniform" && cfg.initial != "dirichlet" && cfg.initial != "cos-bump")
        throw ConfigError("solver.initial must be uniform, dirichlet or cos-bump");
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a(numeric_identity_text(cfg))));
    return buf;
}

bool RunReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

namespace {

nlohmann::json report_body(const RunReport& r) {
    nlohmann::json j;
    j["schema"] = r.schema;
    j["command"] = r.command;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["config"] = r.config_text;
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"id", c.id},
                          {"pass", c.pass},
                          {"value", c.value},
                          {"threshold", c.threshold},
                          {"details", c.details}});
    j["checks"] = std::move(checks);
    j["artifacts"] = r.artifacts;
    return j;
}

} // namespace

std::string RunReport::to_json() const {
    nlohmann::json j = report_body(*this);
    j["timing"] = {{"wall_ms", wall_ms}};
    return j.dump(2) + "\n";
}

std::string RunReport::content_hash() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a(report_body(*this).dump())));
    return buf;
}

// --- SVG -------------------------------------------------------------------

namespace {

constexpr int kW = 720, kH = 420, kMargin = 60;

double nice_min(const std::vector<SvgSeries>& series, bool y) {
    double m = 1e300;
    for (const auto& s : series)
        for (double v : (y ? s.y : s.x)) m = std::min(m, v);
    return m;
}

double nice_max(const std::vector<SvgSeries>& series, bool y) {
    double m = -1e300;
    for (const auto& s : series)
        for (double v : (y ? s.y : s.x)) m = std::max(m, v);
    return m;
}

} // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<SvgSeries>& series, bool log_y) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write SVG file '" + path + "'");
    auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
    std::vector<SvgSeries> ts = series;
    if (log_y)
        for (auto& s : ts)
            for (double& v : s.y) v = ty(v);
    double x0 = nice_min(ts, false), x1 = nice_max(ts, false);
    double y0 = nice_min(ts, true), y1 = nice_max(ts, true);
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    const double px = (kW - 2.0 * kMargin) / (x1 - x0);
    const double py = (kH - 2.0 * kMargin) / (y1 - y0);
    auto X = [&](double v) { return kMargin + (v - x0) * px; };
    auto Y = [&](double v) { return kH - kMargin - (v - y0) * py; };

    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    os << "<line x1='" << kMargin << "' y1='" << kH - kMargin << "' x2='" << kW - kMargin
       << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
    os << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
       << kH - kMargin << "' stroke='black'/>\n";
    os << "<text x='" << kW / 2 << "' y='" << kH - 16 << "' text-anchor='middle' font-size='12'>"
       << x_label << "</text>\n";
    os << "<text x='18' y='" << kH / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 "
       << kH / 2 << ")'>" << (log_y ? "log10 " + y_label : y_label) << "</text>\n";
    for (int g = 0; g <= 4; ++g) {
        const double fy = y0 + g * (y1 - y0) / 4.0;
        os << "<line x1='" << kMargin << "' y1='" << Y(fy) << "' x2='" << kW - kMargin << "' y2='"
           << Y(fy) << "' stroke='#dddddd'/>\n";
        os << "<text x='" << kMargin - 6 << "' y='" << Y(fy) + 4
           << "' text-anchor='end' font-size='10'>" << fmt_double(std::round(fy * 1e4) / 1e4)
           << "</text>\n";
    }
    int legend_y = kMargin;
    for (const auto& s : ts) {
        os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < s.x.size(); ++i) os << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
        os << "'/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx='" << X(s.x[i]) << "' cy='" << Y(s.y[i]) << "' r='2.5' fill='"
               << s.color << "'/>\n";
        os << "<text x='" << kW - kMargin + 4 << "' y='" << legend_y << "' font-size='11' fill='"
           << s.color << "'>" << s.label << "</text>\n";
        legend_y += 14;
    }
    os << "</svg>\n";
}

void write_heat_strip(const std::string& path, const std::string& title,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write SVG file '" + path + "'");
    if (rows.empty() || rows.front().empty()) throw UsageError("write_heat_strip: empty data");
    double vmax = 0.0;
    for (const auto& row : rows)
        for (double v : row) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const std::size_t nt = rows.size(), nx = rows.front().size();
    const double cw = (kW - 2.0 * kMargin) / static_cast<double>(nt);
    const double ch = (kH - 2.0 * kMargin) / static_cast<double>(nx);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            const double f = std::min(rows[i][j] / vmax, 1.0);
            const int r = static_cast<int>(255 * f);
            const int g = static_cast<int>(64 * (1.0 - f) + 32 * f);
            const int b = static_cast<int>(255 * (1.0 - f));
            os << "<rect x='" << kMargin + cw * static_cast<double>(i) << "' y='"
               << kH - kMargin - ch * static_cast<double>(j + 1) << "' width='" << cw + 0.5
               << "' height='" << ch + 0.5 << "' fill='rgb(" << r << ',' << g << ',' << b
               << ")'/>\n";
        }
    os << "<text x='" << kW / 2 << "' y='" << kH - 16
       << "' text-anchor='middle' font-size='12'>time</text>\n";
    os << "</svg>\n";
}

} // namespace kslab
