#include "doctest.h"

#include "caseil/plot.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "caseil/eval.hpp"

using namespace caseil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("caseil-plot-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

eval::EvalSummary summary_of(double rate) {
    eval::EvalSummary s;
    s.n_episodes = 50;
    s.n_success = static_cast<int>(rate * 50 + 0.5);
    s.success_rate = rate;
    s.mean_steps = 12.5;
    s.std_steps = 3.25;
    return s;
}

}  // namespace

TEST_CASE("plot: fixed-schema CSV round-trips through read_rows") {
    TempDir dir;
    std::ostringstream csv;
    eval::write_csv_header(csv);
    eval::write_csv_row(csv, "CASE_CI_L", 4, 7, summary_of(0.55));
    eval::write_csv_row(csv, "GOAL_GUIDANCE", 4, 8, summary_of(0.4));
    write_text(dir.file("t.csv"), csv.str());

    const plot::CsvTable table = plot::read_rows(dir.file("t.csv"));
    CHECK_FALSE(table.has_length);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].variant == "CASE_CI_L");
    CHECK(table.rows[0].k == 4);
    CHECK(table.rows[0].seed == 7);
    CHECK(table.rows[0].n_episodes == 50);
    CHECK(table.rows[0].success_rate == doctest::Approx(0.55));
    CHECK(table.rows[0].length == -1);
    CHECK(table.rows[1].variant == "GOAL_GUIDANCE");
}

TEST_CASE("plot: length-prefixed schema is recognized") {
    TempDir dir;
    std::ostringstream csv;
    csv << "length," << eval::kCsvHeader << '\n';
    csv << "2,";
    eval::write_csv_row(csv, "CASE", 4, 0, summary_of(0.8));
    csv << "3,";
    eval::write_csv_row(csv, "CASE", 4, 0, summary_of(0.6));
    write_text(dir.file("len.csv"), csv.str());

    const plot::CsvTable table = plot::read_rows(dir.file("len.csv"));
    CHECK(table.has_length);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].length == 2);
    CHECK(table.rows[1].length == 3);
    CHECK(table.rows[1].success_rate == doctest::Approx(0.6));
}

TEST_CASE("plot: malformed input names the offending line") {
    TempDir dir;

    write_text(dir.file("hdr.csv"), "variant,success\nCASE,0.5\n");
    CHECK_THROWS_WITH_AS(plot::read_rows(dir.file("hdr.csv")),
                         doctest::Contains("line 1"), plot::PlotError);

    write_text(dir.file("fields.csv"),
               std::string(eval::kCsvHeader) + "\nCASE,4,0,50,0.5,10,2\nCASE,4,0,50\n");
    CHECK_THROWS_WITH_AS(plot::read_rows(dir.file("fields.csv")),
                         doctest::Contains("line 3"), plot::PlotError);

    write_text(dir.file("num.csv"),
               std::string(eval::kCsvHeader) + "\nCASE,4,0,50,often,10,2\n");
    try {
        plot::read_rows(dir.file("num.csv"));
        FAIL("expected PlotError");
    } catch (const plot::PlotError& e) {
        const std::string what = e.what();
        CHECK(what.find("line 2") != std::string::npos);
        CHECK(what.find("success_rate") != std::string::npos);
    }

    write_text(dir.file("empty.csv"), "");
    CHECK_THROWS_AS(plot::read_rows(dir.file("empty.csv")), plot::PlotError);

    write_text(dir.file("headeronly.csv"), std::string(eval::kCsvHeader) + "\n");
    CHECK_THROWS_WITH_AS(plot::read_rows(dir.file("headeronly.csv")),
                         doctest::Contains("no data rows"), plot::PlotError);

    CHECK_THROWS_WITH_AS(plot::read_rows(dir.file("missing.csv")),
                         doctest::Contains("cannot open"), plot::PlotError);
}

TEST_CASE("plot: aggregate groups by variant and x, in first-appearance order") {
    plot::CsvTable table;
    table.has_length = false;
    auto row = [](const std::string& v, int k, uint64_t seed, double rate) {
        plot::CsvRow r;
        r.variant = v;
        r.k = k;
        r.seed = seed;
        r.n_episodes = 50;
        r.success_rate = rate;
        return r;
    };
    // Deliberately interleaved and unsorted in x.
    table.rows = {row("B", 4, 0, 0.2), row("A", 2, 0, 0.5), row("A", 1, 0, 0.3),
                  row("A", 1, 1, 0.5), row("A", 1, 2, 0.7), row("B", 4, 1, 0.4)};

    const auto series = plot::aggregate(table);
    REQUIRE(series.size() == 2);
    CHECK(series[0].label == "B");  // first appearance wins
    CHECK(series[1].label == "A");

    REQUIRE(series[0].points.size() == 1);
    CHECK(series[0].points[0].x == doctest::Approx(4));
    CHECK(series[0].points[0].n == 2);
    CHECK(series[0].points[0].mean == doctest::Approx(0.3));

    REQUIRE(series[1].points.size() == 2);  // sorted by x
    CHECK(series[1].points[0].x == doctest::Approx(1));
    CHECK(series[1].points[0].n == 3);
    CHECK(series[1].points[0].mean == doctest::Approx(0.5));
    const double rates[] = {0.3, 0.5, 0.7};
    CHECK(series[1].points[0].std == doctest::Approx(eval::sample_std(rates)));
    CHECK(series[1].points[1].x == doctest::Approx(2));
}

TEST_CASE("plot: aggregate keys on length when the table has one") {
    plot::CsvTable table;
    table.has_length = true;
    plot::CsvRow r;
    r.variant = "CASE";
    r.k = 4;  // constant k must not become the x axis
    r.length = 3;
    r.success_rate = 0.9;
    table.rows = {r};
    r.length = 5;
    r.success_rate = 0.1;
    table.rows.push_back(r);

    const auto series = plot::aggregate(table);
    REQUIRE(series.size() == 1);
    REQUIRE(series[0].points.size() == 2);
    CHECK(series[0].points[0].x == doctest::Approx(3));
    CHECK(series[0].points[1].x == doctest::Approx(5));
}

TEST_CASE("plot: render_svg is deterministic and self-contained") {
    std::vector<plot::Series> series(2);
    series[0].label = "CASE_CI_L";
    series[0].points = {{1, 0.31, 0.05, 8}, {4, 0.55, 0.08, 8}, {8, 0.47, 0.1, 8}};
    series[1].label = "GOAL_GUIDANCE";
    series[1].points = {{1, 0.22, 0.03, 8}, {4, 0.4, 0.06, 8}, {8, 0.35, 0.02, 8}};

    const std::string a = plot::render_svg(series, "k", "success rate vs k");
    const std::string b = plot::render_svg(series, "k", "success rate vs k");
    CHECK(a == b);
    CHECK(a.rfind("<svg ", 0) == 0);
    CHECK(a.find("</svg>") != std::string::npos);
    CHECK(a.find("CASE_CI_L") != std::string::npos);
    CHECK(a.find("GOAL_GUIDANCE") != std::string::npos);
    CHECK(a.find(">k<") != std::string::npos);
    CHECK(a.find("success rate") != std::string::npos);
    CHECK(a.find("http") == a.find("http://www.w3.org/2000/svg"));  // only the namespace URL
    CHECK(a.find("&lt;") == std::string::npos);

    // Titles are escaped.
    const std::string esc = plot::render_svg(series, "k", "a<b & c>d");
    CHECK(esc.find("a&lt;b &amp; c&gt;d") != std::string::npos);

    CHECK_THROWS_AS(plot::render_svg({}, "k", "t"), plot::PlotError);
}

TEST_CASE("plot: a single point still renders") {
    std::vector<plot::Series> series(1);
    series[0].label = "CASE";
    series[0].points = {{4, 0.5, 0.0, 1}};
    const std::string svg = plot::render_svg(series, "k", "");
    CHECK(svg.rfind("<svg ", 0) == 0);
    CHECK(svg.find("circle") != std::string::npos);
}

TEST_CASE("plot: write_plot end-to-end bytes are reproducible") {
    TempDir dir;
    std::ostringstream csv;
    eval::write_csv_header(csv);
    for (int k = 1; k <= 4; ++k)
        for (uint64_t seed = 0; seed < 3; ++seed)
            eval::write_csv_row(csv, "CASE_CI_L", k, seed,
                                summary_of(0.2 + 0.1 * k + 0.01 * static_cast<double>(seed)));
    write_text(dir.file("k.csv"), csv.str());

    plot::write_plot(dir.file("k.csv"), dir.file("k.svg"));
    const std::string first = read_text(dir.file("k.svg"));
    CHECK(first.rfind("<svg ", 0) == 0);
    CHECK(first.find("success rate vs k") != std::string::npos);

    plot::write_plot(dir.file("k.csv"), dir.file("k.svg"));
    CHECK(read_text(dir.file("k.svg")) == first);

    // Length-schema input labels the x axis accordingly.
    std::ostringstream lcsv;
    lcsv << "length," << eval::kCsvHeader << '\n';
    for (int len = 1; len <= 3; ++len) {
        lcsv << len << ',';
        eval::write_csv_row(lcsv, "CASE", 4, 0, summary_of(1.0 - 0.2 * len));
    }
    write_text(dir.file("len.csv"), lcsv.str());
    plot::write_plot(dir.file("len.csv"), dir.file("len.svg"), "generalization");
    const std::string lsvg = read_text(dir.file("len.svg"));
    CHECK(lsvg.find("sequence length") != std::string::npos);
    CHECK(lsvg.find("generalization") != std::string::npos);
}
