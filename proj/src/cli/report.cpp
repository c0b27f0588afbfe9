#include "osscl/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace osscl::cli {

namespace fs = std::filesystem;

namespace {

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void add_unique(std::vector<std::string>& names, const std::string& name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
}

bool close(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(a)); }

// The aggregate in metrics.json must be reproducible from the seed reports.
Stat verified_final_accuracy(const Json& metrics, const fs::path& dir) {
    const auto& stored = metrics.at("aggregate").at("final_accuracy");
    const Stat claimed{stored.at("mean").get<double>(), stored.at("std").get<double>(), stored.at("n").get<std::size_t>()};

    std::vector<double> finals;
    for (const auto& seed : metrics.at("seeds")) {
        const fs::path report = dir / ("seed_" + std::to_string(seed.get<std::uint64_t>())) / "report.json";
        finals.push_back(report_from_json(read_json(report)).final_accuracy);
    }
    const Stat recomputed = mean_std(finals);
    if (recomputed.n != claimed.n || !close(recomputed.mean, claimed.mean) || !close(recomputed.stddev, claimed.stddev))
        throw Error(dir.string() + ": aggregate in metrics.json does not match the per-seed reports");
    return recomputed;
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

ReportTable build_report(const std::vector<fs::path>& runs) {
    ReportTable table;
    for (const auto& run : runs) {
        const fs::path file = fs::is_directory(run) ? run / "metrics.json" : run;
        const Json metrics = read_json(file);
        const auto schema = metrics.contains("schema") && metrics["schema"].is_string()
                                ? metrics["schema"].get<std::string>()
                                : std::string("<missing>");
        if (schema != kMetricsSchema)
            throw SchemaMismatch(file.string() + ": schema " + schema + " is not " + kMetricsSchema);

        const auto label = metrics.at("label").get<std::string>();
        const auto scenario = metrics.at("scenario").get<std::string>();
        const auto key = std::make_pair(label, scenario);
        if (table.cells.count(key))
            throw Error(file.string() + ": duplicate run for label '" + label + "' in scenario '" + scenario + "'");
        table.cells[key] = verified_final_accuracy(metrics, file.parent_path());
        add_unique(table.rows, label);
        add_unique(table.columns, scenario);
    }
    return table;
}

std::string render_text(const ReportTable& table) {
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"method"});
    for (const auto& c : table.columns) grid[0].push_back(c);
    for (const auto& r : table.rows) {
        std::vector<std::string> line{r};
        for (const auto& c : table.columns) {
            auto it = table.cells.find({r, c});
            line.push_back(it == table.cells.end() ? "" : percent(it->second.mean) + " ± " + percent(it->second.stddev));
        }
        grid.push_back(std::move(line));
    }
    // "±" is two bytes but one column wide
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(grid[0].size(), 0);
    for (const auto& line : grid)
        for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));

    std::ostringstream out;
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out << line[i];
            if (i + 1 < line.size()) out << std::string(widths[i] - width(line[i]) + 2, ' ');
        }
        out << '\n';
    }
    return out.str();
}

std::string render_csv(const ReportTable& table) {
    std::ostringstream out;
    out << "label";
    for (const auto& c : table.columns) out << ',' << csv_field(c + "_mean") << ',' << csv_field(c + "_std") << ',' << csv_field(c + "_n");
    out << '\n';
    for (const auto& r : table.rows) {
        out << csv_field(r);
        for (const auto& c : table.columns) {
            auto it = table.cells.find({r, c});
            if (it == table.cells.end())
                out << ",,,";
            else
                out << ',' << format_number(it->second.mean) << ',' << format_number(it->second.stddev) << ','
                    << it->second.n;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace osscl::cli
