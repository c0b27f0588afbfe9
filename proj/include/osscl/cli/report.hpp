#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osscl/cli/experiment.hpp"

namespace osscl::cli {

// A metrics file written by a different, unknown format version.
class SchemaMismatch : public Error {
public:
    using Error::Error;
};

struct ReportTable {
    std::vector<std::string> rows;     // labels, in order of first appearance
    std::vector<std::string> columns;  // scenario names, in order of first appearance
    std::map<std::pair<std::string, std::string>, Stat> cells;
};

// Reads each run directory's metrics.json (a path to the file itself also
// works), recomputes the final-accuracy aggregate from the per-seed reports
// next to it and fails if they disagree.
ReportTable build_report(const std::vector<std::filesystem::path>& runs);

// Cells as "mean ± std" in percent; blank where a run is missing.
std::string render_text(const ReportTable& table);
// One row per label with <scenario>_mean, <scenario>_std and <scenario>_n columns.
std::string render_csv(const ReportTable& table);

}  // namespace osscl::cli
