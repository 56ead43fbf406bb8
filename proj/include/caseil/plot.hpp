#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace caseil::plot {

struct PlotError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One row of the fixed experiment schema, optionally prefixed by a
// sequence-length column (the sweep-len output).
struct CsvRow {
    int length = -1;  // -1 ⇔ the file has no length column
    std::string variant;
    int k = 0;
    uint64_t seed = 0;
    int n_episodes = 0;
    double success_rate = 0.0;
    double mean_steps = 0.0;
    double std_steps = 0.0;
};

struct CsvTable {
    bool has_length = false;
    std::vector<CsvRow> rows;
};

// Strict parse; any malformed header, field count, or number raises
// PlotError naming the 1-based line.
CsvTable read_rows(const std::string& path);

// Success rate aggregated over seeds at each x (k, or sequence length when
// the table has one). One series per variant, in first-appearance order.
struct SeriesPoint {
    double x = 0.0;
    double mean = 0.0;
    double std = 0.0;
    int n = 0;
};
struct Series {
    std::string label;
    std::vector<SeriesPoint> points;
};
std::vector<Series> aggregate(const CsvTable& table);

// Self-contained static SVG line chart with ±std whiskers. Byte-deterministic
// in its inputs (fixed canvas, palette, and number formatting).
std::string render_svg(const std::vector<Series>& series, const std::string& x_label,
                       const std::string& title);

// read_rows → aggregate → render_svg → svg_path. Empty title derives
// "success rate vs …" from the schema.
void write_plot(const std::string& csv_path, const std::string& svg_path,
                const std::string& title = "");

}  // namespace caseil::plot
