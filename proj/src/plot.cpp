#include "caseil/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "caseil/eval.hpp"

namespace caseil::plot {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void bad_field(int line_no, const std::string& name, const std::string& text) {
    throw PlotError("line " + std::to_string(line_no) + ": field '" + name +
                    "' has unparseable value '" + text + "'");
}

template <typename T>
T parse_num(const std::string& text, int line_no, const char* name) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) bad_field(line_no, name, text);
    return value;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

}  // namespace

CsvTable read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PlotError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    int line_no = 0;
    const std::string plain = caseil::eval::kCsvHeader;
    const std::string with_length = "length," + plain;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line == plain) {
                table.has_length = false;
            } else if (line == with_length) {
                table.has_length = true;
            } else {
                throw PlotError("line 1: unrecognized header '" + line + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_fields(line);
        const size_t want = table.has_length ? 8 : 7;
        if (fields.size() != want)
            throw PlotError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(want) + " fields, got " +
                            std::to_string(fields.size()));
        CsvRow row;
        size_t f = 0;
        if (table.has_length) row.length = parse_num<int>(fields[f++], line_no, "length");
        row.variant = fields[f++];
        if (row.variant.empty())
            throw PlotError("line " + std::to_string(line_no) + ": empty variant name");
        row.k = parse_num<int>(fields[f++], line_no, "k");
        row.seed = parse_num<uint64_t>(fields[f++], line_no, "seed");
        row.n_episodes = parse_num<int>(fields[f++], line_no, "n_episodes");
        row.success_rate = parse_num<double>(fields[f++], line_no, "success_rate");
        row.mean_steps = parse_num<double>(fields[f++], line_no, "mean_steps");
        row.std_steps = parse_num<double>(fields[f++], line_no, "std");
        table.rows.push_back(std::move(row));
    }
    if (line_no == 0) throw PlotError("'" + path + "' is empty");
    if (table.rows.empty()) throw PlotError("'" + path + "' has a header but no data rows");
    return table;
}

std::vector<Series> aggregate(const CsvTable& table) {
    std::vector<Series> series;
    std::map<std::string, size_t> index;
    // variant → x → rates, with variants kept in first-appearance order.
    std::vector<std::map<int, std::vector<double>>> buckets;
    for (const auto& row : table.rows) {
        auto it = index.find(row.variant);
        if (it == index.end()) {
            it = index.emplace(row.variant, series.size()).first;
            series.push_back(Series{row.variant, {}});
            buckets.emplace_back();
        }
        const int x = table.has_length ? row.length : row.k;
        buckets[it->second][x].push_back(row.success_rate);
    }
    for (size_t s = 0; s < series.size(); ++s) {
        for (const auto& [x, rates] : buckets[s]) {
            SeriesPoint pt;
            pt.x = x;
            pt.n = static_cast<int>(rates.size());
            double sum = 0.0;
            for (double r : rates) sum += r;
            pt.mean = sum / pt.n;
            pt.std = caseil::eval::sample_std(rates);
            series[s].points.push_back(pt);
        }
    }
    return series;
}

std::string render_svg(const std::vector<Series>& series, const std::string& x_label,
                       const std::string& title) {
    if (series.empty()) throw PlotError("nothing to plot: no series");
    constexpr double W = 720, H = 440;
    constexpr double ML = 62, MR = 150, MT = 42, MB = 52;
    const double pw = W - ML - MR, ph = H - MT - MB;

    double xmin = 0, xmax = 0;
    bool first = true;
    std::vector<double> xticks;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            if (first || p.x < xmin) xmin = p.x;
            if (first || p.x > xmax) xmax = p.x;
            first = false;
            if (std::find(xticks.begin(), xticks.end(), p.x) == xticks.end())
                xticks.push_back(p.x);
        }
    if (first) throw PlotError("nothing to plot: series have no points");
    std::sort(xticks.begin(), xticks.end());
    if (xmax == xmin) {
        xmin -= 1;
        xmax += 1;
    }
    auto sx = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return MT + (1.0 - y) * ph; };  // y domain is [0,1]

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" "
           "viewBox=\"0 0 720 440\" font-family=\"sans-serif\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"720\" height=\"440\" fill=\"#ffffff\"/>\n";
    if (!title.empty())
        out << "<text x=\"" << fmt(ML + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
               "font-size=\"15\">"
            << escape_xml(title) << "</text>\n";

    // Gridlines and axis ticks.
    for (int i = 0; i <= 5; ++i) {
        const double y = i / 5.0;
        out << "<line x1=\"" << fmt(ML) << "\" y1=\"" << fmt(sy(y)) << "\" x2=\""
            << fmt(ML + pw) << "\" y2=\"" << fmt(sy(y))
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        char lbl[8];
        std::snprintf(lbl, sizeof(lbl), "%.1f", y);
        out << "<text x=\"" << fmt(ML - 8) << "\" y=\"" << fmt(sy(y) + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << lbl << "</text>\n";
    }
    for (double x : xticks) {
        out << "<line x1=\"" << fmt(sx(x)) << "\" y1=\"" << fmt(MT + ph) << "\" x2=\""
            << fmt(sx(x)) << "\" y2=\"" << fmt(MT + ph + 5)
            << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << fmt(sx(x)) << "\" y=\"" << fmt(MT + ph + 18)
            << "\" text-anchor=\"middle\" font-size=\"11\">"
            << static_cast<long long>(std::llround(x)) << "</text>\n";
    }
    out << "<line x1=\"" << fmt(ML) << "\" y1=\"" << fmt(MT) << "\" x2=\"" << fmt(ML)
        << "\" y2=\"" << fmt(MT + ph) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << fmt(ML) << "\" y1=\"" << fmt(MT + ph) << "\" x2=\""
        << fmt(ML + pw) << "\" y2=\"" << fmt(MT + ph)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(ML + pw / 2) << "\" y=\"" << fmt(H - 14)
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(x_label)
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << fmt(MT + ph / 2)
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << fmt(MT + ph / 2) << ")\">success rate</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        // ±std whiskers, clamped to the axis range.
        for (const auto& p : series[s].points) {
            const double lo = std::max(0.0, p.mean - p.std);
            const double hi = std::min(1.0, p.mean + p.std);
            out << "<line x1=\"" << fmt(sx(p.x)) << "\" y1=\"" << fmt(sy(lo)) << "\" x2=\""
                << fmt(sx(p.x)) << "\" y2=\"" << fmt(sy(hi)) << "\" stroke=\"" << color
                << "\" stroke-width=\"1\"/>\n";
            for (double w : {lo, hi})
                out << "<line x1=\"" << fmt(sx(p.x) - 4) << "\" y1=\"" << fmt(sy(w))
                    << "\" x2=\"" << fmt(sx(p.x) + 4) << "\" y2=\"" << fmt(sy(w))
                    << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
        }
        if (series[s].points.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\" points=\"";
            for (size_t i = 0; i < series[s].points.size(); ++i) {
                const auto& p = series[s].points[i];
                if (i) out << ' ';
                out << fmt(sx(p.x)) << ',' << fmt(sy(p.mean));
            }
            out << "\"/>\n";
        }
        for (const auto& p : series[s].points)
            out << "<circle cx=\"" << fmt(sx(p.x)) << "\" cy=\"" << fmt(sy(p.mean))
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        // Legend entry.
        const double ly = MT + 10 + 18.0 * s;
        out << "<rect x=\"" << fmt(ML + pw + 14) << "\" y=\"" << fmt(ly - 8)
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << fmt(ML + pw + 29) << "\" y=\"" << fmt(ly + 1)
            << "\" font-size=\"11\">" << escape_xml(series[s].label) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void write_plot(const std::string& csv_path, const std::string& svg_path,
                const std::string& title) {
    const CsvTable table = read_rows(csv_path);
    const auto series = aggregate(table);
    const std::string x_label = table.has_length ? "sequence length" : "k";
    std::string t = title;
    if (t.empty()) t = "success rate vs " + x_label;
    const std::string svg = render_svg(series, x_label, t);
    std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
    if (!out) throw PlotError("cannot write '" + svg_path + "'");
    out << svg;
    if (!out.flush()) throw PlotError("failed writing '" + svg_path + "'");
}

}  // namespace caseil::plot
