// Single entry point for the craftworld one-shot imitation laboratory:
// dataset generation, behavior-cloning training, closed-loop evaluation,
// ablations, and chart emission. Owns configuration merging (defaults ←
// config file ← flags) and writes the effective configuration next to every
// artifact so any run can be reproduced byte-for-byte from its directory.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "caseil/compose.hpp"
#include "caseil/datagen.hpp"
#include "caseil/eval.hpp"
#include "caseil/plot.hpp"
#include "caseil/rng.hpp"
#include "caseil/train.hpp"

// Pinned to one BLAS thread: GEMM reassociation across thread counts would
// break byte-reproducibility between machines.
extern "C" void openblas_set_num_threads(int);

namespace {

namespace fs = std::filesystem;
using namespace caseil;
using json = nlohmann::json;

// Exit contract: 0 success, 1 usage, 2 runtime failure.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
T parse_value(const std::string& text, const std::string& key);

template <>
std::string parse_value<std::string>(const std::string& text, const std::string&) {
    return text;
}

template <typename T>
T parse_value(const std::string& text, const std::string& key) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw UsageError("config: key '" + key + "' has unparseable value '" + text + "'");
    return value;
}

std::string value_string(const std::string& v) { return v; }
std::string value_string(int v) { return std::to_string(v); }
std::string value_string(uint64_t v) { return std::to_string(v); }
std::string value_string(double v) { return fmt17(v); }

// The effective run configuration: every knob of one subcommand, bound both
// to its CLI11 option and to a flat `key=value` line. The file fills in only
// knobs the command line did not set, so precedence is flags > file >
// defaults; serialization re-reads into an identical run.
class KnobSet {
  public:
    template <typename T>
    void bind(CLI::Option* opt, std::string key, T* target) {
        Entry e;
        e.key = std::move(key);
        e.opt = opt;
        e.from_string = [target, key = e.key](const std::string& text) {
            *target = parse_value<T>(text, key);
        };
        e.to_string = [target] { return value_string(*target); };
        entries_.push_back(std::move(e));
    }

    void apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw UsageError("config: cannot open '" + path + "'");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError("config: line " + std::to_string(line_no) +
                                 " is not key=value: '" + line + "'");
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            const Entry* entry = nullptr;
            for (const auto& e : entries_)
                if (e.key == key) entry = &e;
            if (!entry)
                throw UsageError("config: unknown key '" + key + "' (line " +
                                 std::to_string(line_no) + ")");
            if (entry->opt->count() > 0) continue;  // explicit flag wins
            entry->from_string(value);
        }
    }

    void write(const fs::path& path, const std::string& subcommand) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        out << "# effective configuration for `caseil " << subcommand
            << "`; rerun with --config to reproduce\n";
        for (const auto& e : entries_) {
            const std::string value = e.to_string();
            if (value.find('\n') != std::string::npos)
                throw UsageError("value for '" + e.key + "' contains a newline");
            out << e.key << '=' << value << '\n';
        }
        if (!out.flush()) throw std::runtime_error("failed writing '" + path.string() + "'");
    }

  private:
    struct Entry {
        std::string key;
        CLI::Option* opt = nullptr;
        std::function<void(const std::string&)> from_string;
        std::function<std::string()> to_string;
    };
    std::vector<Entry> entries_;
};

// Flags every subcommand carries. The config file is handled here: it is
// read inside the subcommand callback, before validation.
struct CommonArgs {
    uint64_t seed = 0;
    std::string out = "out";
    int workers = 1;
    std::string config;
};

void add_common(CLI::App* sub, CommonArgs* c, KnobSet* knobs, bool seed_used = true) {
    auto* seed = sub->add_option("--seed", c->seed,
                                 seed_used ? "master seed; all randomness derives from it"
                                           : "accepted for uniformity; this subcommand is "
                                             "deterministic without it");
    auto* out = sub->add_option("--out", c->out, "output directory");
    auto* workers =
        sub->add_option("--workers", c->workers,
                        "threads for independent train+eval jobs; results never depend on it");
    sub->add_option("--config", c->config, "key=value file; flags override file entries");
    knobs->bind(seed, "seed", &c->seed);
    knobs->bind(out, "out", &c->out);
    knobs->bind(workers, "workers", &c->workers);
}

void check_common(const CommonArgs& c) {
    if (c.out.empty()) throw UsageError("--out must not be empty");
    if (c.workers < 1) throw UsageError("--workers must be ≥ 1");
}

fs::path prepare_out(const CommonArgs& c) {
    fs::path dir(c.out);
    fs::create_directories(dir);
    return dir;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse_value<int>(item, flag));
    if (out.empty()) throw UsageError(flag + ": expected a comma-separated integer list");
    return out;
}

compose::Variant parse_variant(const std::string& name) {
    try {
        return compose::variant_from_name(name);
    } catch (const std::exception&) {
        throw UsageError("unknown variant '" + name +
                         "' (expected CASE, CASE_CI, CASE_CI_L, GOAL_GUIDANCE, or CPV_FULL)");
    }
}

std::vector<compose::Variant> parse_variant_list(const std::string& text) {
    std::vector<compose::Variant> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse_variant(item));
    if (out.empty()) throw UsageError("--variants: expected a comma-separated variant list");
    return out;
}

std::vector<uint64_t> trial_seeds(uint64_t seed, int trials) {
    if (trials < 1) throw UsageError("--trials must be ≥ 1");
    std::vector<uint64_t> seeds(static_cast<size_t>(trials));
    for (int i = 0; i < trials; ++i) seeds[static_cast<size_t>(i)] = seed + static_cast<uint64_t>(i);
    return seeds;
}

std::vector<datagen::EpisodePair> load_pairs(const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string("--") + what + " is required");
    return datagen::read_dataset(path);
}

// ---------------------------------------------------------------- gen -----

struct GenArgs {
    CommonArgs common;
    int pairs = 2000;
    int test_pairs = 200;
    int grid = 8;
    int tasks_min = 2;
    int tasks_max = 8;
    std::string holdout_mode = "composition";
    double holdout_fraction = 0.25;
    std::string excluded_kind = "BuildHouse";
    KnobSet knobs;
};

void run_gen(GenArgs& a) {
    check_common(a.common);
    if (a.pairs < 1 || a.test_pairs < 1)
        throw UsageError("--pairs and --test-pairs must be ≥ 1");
    if (a.grid < 2) throw UsageError("--grid must be ≥ 2");
    if (a.tasks_min < 1 || a.tasks_min > a.tasks_max)
        throw UsageError("need 1 ≤ --tasks-min ≤ --tasks-max");
    if (a.holdout_fraction <= 0.0 || a.holdout_fraction >= 1.0)
        throw UsageError("--holdout-fraction must lie in (0, 1)");

    datagen::SplitSpec spec;
    if (a.holdout_mode == "composition") {
        spec.mode = datagen::SplitMode::Composition;
    } else if (a.holdout_mode == "kind") {
        spec.mode = datagen::SplitMode::KindHoldout;
        const auto kind = craft::task_from_string(a.excluded_kind);
        if (!kind) throw UsageError("unknown task kind '" + a.excluded_kind + "'");
        spec.excluded = *kind;
    } else {
        throw UsageError("--holdout-mode must be 'composition' or 'kind'");
    }
    spec.holdout_fraction = a.holdout_fraction;

    datagen::GenConfig g;
    g.width = g.height = a.grid;
    g.min_tasks = a.tasks_min;
    g.max_tasks = a.tasks_max;

    const fs::path dir = prepare_out(a.common);
    a.knobs.write(dir / "gen-config.txt", "gen");

    const auto split = datagen::split_tasks(g, spec, stream_seed(a.common.seed, "gen-split"));
    const auto train_pairs =
        datagen::gen_dataset(stream_seed(a.common.seed, "gen-train"), a.pairs,
                             split.train_sequences, g);
    const auto test_pairs = datagen::gen_dataset(stream_seed(a.common.seed, "gen-test"),
                                                 a.test_pairs, split.test_sequences, g);
    datagen::write_dataset(train_pairs, (dir / "train.jsonl").string());
    datagen::write_dataset(test_pairs, (dir / "test.jsonl").string());

    json manifest;
    manifest["grid"] = a.grid;
    manifest["holdout_fraction"] = a.holdout_fraction;
    manifest["holdout_mode"] = a.holdout_mode;
    if (spec.mode == datagen::SplitMode::KindHoldout)
        manifest["excluded_kind"] = craft::to_string(spec.excluded);
    manifest["seed"] = a.common.seed;
    manifest["tasks_min"] = a.tasks_min;
    manifest["tasks_max"] = a.tasks_max;
    manifest["train_pairs"] = static_cast<int>(train_pairs.size());
    manifest["test_pairs"] = static_cast<int>(test_pairs.size());
    auto sequences_json = [](const std::vector<datagen::TaskMultiset>& seqs) {
        json arr = json::array();
        for (const auto& ms : seqs) {
            json one = json::array();
            for (const auto t : ms) one.push_back(craft::to_string(t));
            arr.push_back(std::move(one));
        }
        return arr;
    };
    manifest["train_sequences"] = sequences_json(split.train_sequences);
    manifest["test_sequences"] = sequences_json(split.test_sequences);
    {
        std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        mf << manifest.dump(2) << '\n';
        if (!mf.flush()) throw std::runtime_error("failed writing manifest.json");
    }

    std::cout << "train: " << train_pairs.size() << " pairs over "
              << split.train_sequences.size() << " sequences -> "
              << (dir / "train.jsonl").string() << '\n';
    std::cout << "test:  " << test_pairs.size() << " pairs over " << split.test_sequences.size()
              << " sequences -> " << (dir / "test.jsonl").string() << '\n';
}

// -------------------------------------------------------------- train -----

struct TrainArgs {
    CommonArgs common;
    std::string dataset;
    std::string variant = "CASE_CI_L";
    int k = 4;
    double lambda_h = 1.0;
    double lambda_p = 1.0;
    double margin = 1.0;
    int epochs = 30;
    int batch = 64;
    double lr = 1e-3;
    int latent_dim = 32;
    int enc_hidden = 64;
    int pol_hidden = 64;
    int samples_per_pair = 8;
    int checkpoint_every = 0;
    KnobSet knobs;
};

train::TrainConfig training_config(const TrainArgs& a) {
    if (a.dataset.empty()) throw UsageError("--dataset is required");
    if (a.k < 0) throw UsageError("--k must be ≥ 0");
    if (a.lambda_h < 0.0 || a.lambda_p < 0.0) throw UsageError("loss weights must be ≥ 0");
    if (a.margin < 0.0) throw UsageError("--margin must be ≥ 0");
    if (a.epochs < 0) throw UsageError("--epochs must be ≥ 0");
    if (a.batch < 1) throw UsageError("--batch must be ≥ 1");
    if (a.lr <= 0.0) throw UsageError("--lr must be > 0");
    if (a.latent_dim < 1 || a.enc_hidden < 1 || a.pol_hidden < 1)
        throw UsageError("network sizes must be ≥ 1");
    if (a.samples_per_pair < 1) throw UsageError("--samples-per-pair must be ≥ 1");
    if (a.checkpoint_every < 0) throw UsageError("--checkpoint-every must be ≥ 0");

    train::TrainConfig cfg;
    cfg.variant = parse_variant(a.variant);
    cfg.k = a.k;
    cfg.lambda_h = a.lambda_h;
    cfg.lambda_p = a.lambda_p;
    cfg.margin = a.margin;
    cfg.lr = a.lr;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.seed = a.common.seed;
    cfg.latent_dim = a.latent_dim;
    cfg.enc_hidden = a.enc_hidden;
    cfg.pol_hidden = a.pol_hidden;
    cfg.samples_per_pair = a.samples_per_pair;
    cfg.dataset_path = a.dataset;
    return cfg;
}

void run_train(TrainArgs& a) {
    check_common(a.common);
    train::TrainConfig cfg = training_config(a);
    cfg.checkpoint_every = a.checkpoint_every;

    const fs::path dir = prepare_out(a.common);
    cfg.checkpoint_path = (dir / "model.ckpt").string();
    cfg.metrics_path = (dir / "metrics.csv").string();
    a.knobs.write(dir / "train-config.txt", "train");

    const train::TrainResult r = train::train_loop(cfg);
    std::cout << "trained " << compose::variant_name(cfg.variant) << " for " << r.epochs
              << " epochs (" << r.steps << " steps)\n";
    char losses[160];
    std::snprintf(losses, sizeof(losses),
                  "final losses: total=%.6f policy=%.6f H=%.6f P=%.6f\n", r.last.total,
                  r.last.policy, r.last.h, r.last.p);
    std::cout << losses;
    std::cout << "checkpoint: " << cfg.checkpoint_path << '\n';
}

// --------------------------------------------------------------- eval -----

struct EvalArgs {
    CommonArgs common;
    std::string checkpoint;
    std::string dataset;
    int k = -1;  // < 0 → the checkpoint's k
    double budget_mult = 2.0;
    int budget_add = 20;
    KnobSet knobs;
};

void run_eval(EvalArgs& a) {
    check_common(a.common);
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (a.budget_mult < 0.0) throw UsageError("--budget-mult must be ≥ 0");
    if (a.budget_add < 0) throw UsageError("--budget-add must be ≥ 0");
    const auto pairs = load_pairs(a.dataset, "dataset");
    if (pairs.empty()) throw UsageError("test set '" + a.dataset + "' has no episodes");

    const train::LoadedModel loaded = train::load_model(a.checkpoint);
    const int k = a.k < 0 ? loaded.k : a.k;
    const eval::EvalSummary s =
        eval::success_rate(*loaded.model, pairs, k, a.budget_mult, a.budget_add);

    const fs::path dir = prepare_out(a.common);
    a.knobs.write(dir / "eval-config.txt", "eval");
    {
        std::ofstream csv(dir / "eval.csv", std::ios::binary | std::ios::trunc);
        eval::write_csv_header(csv);
        eval::write_csv_row(csv, compose::variant_name(loaded.config.variant), k, loaded.seed, s);
        if (!csv.flush()) throw std::runtime_error("failed writing eval.csv");
    }

    char line[200];
    std::snprintf(line, sizeof(line),
                  "%s (k=%d, trained %d steps): success %.4f (%d/%d, ±%.4f), mean steps %.2f\n",
                  compose::variant_name(loaded.config.variant), k, loaded.step, s.success_rate,
                  s.n_success, s.n_episodes, s.ci_half_width, s.mean_steps);
    std::cout << line;
    std::cout << "rows: " << (dir / "eval.csv").string() << '\n';
}

// ----------------------------------------------------------- ablate-k -----

struct AblateArgs {
    CommonArgs common;
    std::string dataset;
    std::string test_dataset;
    std::string ks = "1,2,3,4,5,6,7,8";
    int trials = 8;
    TrainArgs train;  // shares the training knob set; its own common/knobs unused
    KnobSet knobs;
};

void add_train_knobs(CLI::App* sub, TrainArgs* t, KnobSet* knobs, bool with_variant = true) {
    if (with_variant)
        knobs->bind(sub->add_option("--variant", t->variant, "policy/goal layout to train"),
                    "variant", &t->variant);
    knobs->bind(sub->add_option("--lambda-h", t->lambda_h, "weight of the homomorphism loss"),
                "lambda-h", &t->lambda_h);
    knobs->bind(sub->add_option("--lambda-p", t->lambda_p, "weight of the pair-alignment loss"),
                "lambda-p", &t->lambda_p);
    knobs->bind(sub->add_option("--margin", t->margin, "triplet margin"), "margin", &t->margin);
    knobs->bind(sub->add_option("--epochs", t->epochs, "training epochs"), "epochs", &t->epochs);
    knobs->bind(sub->add_option("--batch", t->batch, "minibatch size"), "batch", &t->batch);
    knobs->bind(sub->add_option("--lr", t->lr, "Adam learning rate"), "lr", &t->lr);
    knobs->bind(sub->add_option("--latent-dim", t->latent_dim, "task-embedding width"),
                "latent-dim", &t->latent_dim);
    knobs->bind(sub->add_option("--enc-hidden", t->enc_hidden, "encoder hidden width"),
                "enc-hidden", &t->enc_hidden);
    knobs->bind(sub->add_option("--pol-hidden", t->pol_hidden, "policy hidden width"),
                "pol-hidden", &t->pol_hidden);
    knobs->bind(sub->add_option("--samples-per-pair", t->samples_per_pair,
                                "timestep draws per pair per epoch"),
                "samples-per-pair", &t->samples_per_pair);
}

void run_ablate(AblateArgs& a) {
    check_common(a.common);
    a.train.common = a.common;
    a.train.dataset = a.dataset;
    const std::vector<int> ks = parse_int_list(a.ks, "--ks");
    for (const int k : ks)
        if (k < 0) throw UsageError("--ks entries must be ≥ 0");
    const auto seeds = trial_seeds(a.common.seed, a.trials);
    const auto train_pairs = load_pairs(a.dataset, "dataset");
    const auto test_pairs = load_pairs(a.test_dataset, "test-dataset");
    if (train_pairs.empty()) throw UsageError("training set '" + a.dataset + "' has no episodes");
    if (test_pairs.empty())
        throw UsageError("test set '" + a.test_dataset + "' has no episodes");
    const train::TrainConfig base = training_config(a.train);

    const fs::path dir = prepare_out(a.common);
    a.knobs.write(dir / "ablate-k-config.txt", "ablate-k");
    std::ostringstream csv;
    eval::ablate_k(base, train_pairs, test_pairs, ks, seeds, &csv, a.common.workers);
    {
        std::ofstream f(dir / "ablate_k.csv", std::ios::binary | std::ios::trunc);
        f << csv.str();
        if (!f.flush()) throw std::runtime_error("failed writing ablate_k.csv");
    }
    std::cout << ks.size() * seeds.size() << " rows (" << ks.size() << " k values x "
              << seeds.size() << " trials) -> " << (dir / "ablate_k.csv").string() << '\n';
}

// ---------------------------------------------------------- sweep-len -----

struct SweepArgs {
    CommonArgs common;
    std::string dataset;
    std::string lengths = "2,3";
    int episodes_per_length = 50;
    std::string variants = "CASE,CASE_CI,CASE_CI_L,GOAL_GUIDANCE,CPV_FULL";
    int trials = 1;
    TrainArgs train;
    KnobSet knobs;
};

void run_sweep(SweepArgs& a) {
    check_common(a.common);
    a.train.common = a.common;
    a.train.dataset = a.dataset;
    const std::vector<int> lengths = parse_int_list(a.lengths, "--lengths");
    for (const int len : lengths)
        if (len < 1) throw UsageError("--lengths entries must be ≥ 1");
    if (a.episodes_per_length < 1) throw UsageError("--episodes-per-length must be ≥ 1");
    const auto variants = parse_variant_list(a.variants);
    const auto seeds = trial_seeds(a.common.seed, a.trials);
    const auto train_pairs = load_pairs(a.dataset, "dataset");
    if (train_pairs.empty()) throw UsageError("training set '" + a.dataset + "' has no episodes");
    const train::TrainConfig base = training_config(a.train);

    // Fresh per-length test sets live on the training dataset's map geometry;
    // lengths range free of the training min/max.
    datagen::GenConfig g;
    g.width = train_pairs.front().train.world.width();
    g.height = train_pairs.front().train.world.height();
    g.min_tasks = 1;
    g.max_tasks = *std::max_element(lengths.begin(), lengths.end());

    const fs::path dir = prepare_out(a.common);
    a.knobs.write(dir / "sweep-len-config.txt", "sweep-len");
    std::ostringstream csv;
    eval::sweep_sequence_length(base, train_pairs, g, lengths, a.episodes_per_length, variants,
                                seeds, stream_seed(a.common.seed, "sweep-test"), &csv,
                                a.common.workers);
    {
        std::ofstream f(dir / "sweep_len.csv", std::ios::binary | std::ios::trunc);
        f << csv.str();
        if (!f.flush()) throw std::runtime_error("failed writing sweep_len.csv");
    }
    std::cout << lengths.size() * variants.size() * seeds.size() << " rows -> "
              << (dir / "sweep_len.csv").string() << '\n';
}

// --------------------------------------------------------------- plot -----

struct PlotArgs {
    CommonArgs common;
    std::string input;
    std::string output;
    std::string title;
    KnobSet knobs;
};

void run_plot(PlotArgs& a) {
    check_common(a.common);
    if (a.input.empty()) throw UsageError("--input is required");
    const fs::path dir = prepare_out(a.common);
    if (a.output.empty())
        a.output = (dir / (fs::path(a.input).stem().string() + ".svg")).string();
    a.knobs.write(dir / "plot-config.txt", "plot");
    plot::write_plot(a.input, a.output, a.title);
    std::cout << "chart: " << a.output << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    openblas_set_num_threads(1);

    CLI::App app{"craftworld one-shot imitation laboratory"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate paired train/test datasets");
    add_common(gen_cmd, &gen.common, &gen.knobs);
    gen.knobs.bind(gen_cmd->add_option("--pairs", gen.pairs, "training episode pairs"), "pairs",
                   &gen.pairs);
    gen.knobs.bind(gen_cmd->add_option("--test-pairs", gen.test_pairs, "held-out episode pairs"),
                   "test-pairs", &gen.test_pairs);
    gen.knobs.bind(gen_cmd->add_option("--grid", gen.grid, "square map side length"), "grid",
                   &gen.grid);
    gen.knobs.bind(gen_cmd->add_option("--tasks-min", gen.tasks_min, "shortest task multiset"),
                   "tasks-min", &gen.tasks_min);
    gen.knobs.bind(gen_cmd->add_option("--tasks-max", gen.tasks_max, "longest task multiset"),
                   "tasks-max", &gen.tasks_max);
    gen.knobs.bind(gen_cmd->add_option("--holdout-mode", gen.holdout_mode,
                                       "'composition' (unseen multisets) or 'kind' (one task "
                                       "kind only in test)"),
                   "holdout-mode", &gen.holdout_mode);
    gen.knobs.bind(gen_cmd->add_option("--holdout-fraction", gen.holdout_fraction,
                                       "fraction of multisets held out (composition mode)"),
                   "holdout-fraction", &gen.holdout_fraction);
    gen.knobs.bind(gen_cmd->add_option("--excluded-kind", gen.excluded_kind,
                                       "task kind held out (kind mode)"),
                   "excluded-kind", &gen.excluded_kind);
    gen_cmd->callback([&] {
        if (!gen.common.config.empty()) gen.knobs.apply_file(gen.common.config);
        run_gen(gen);
    });

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "behavior-clone a variant on a dataset");
    add_common(train_cmd, &tr.common, &tr.knobs);
    tr.knobs.bind(train_cmd->add_option("--dataset", tr.dataset, "training pairs (jsonl)"),
                  "dataset", &tr.dataset);
    tr.knobs.bind(train_cmd->add_option("--k", tr.k, "waypoint lookahead"), "k", &tr.k);
    add_train_knobs(train_cmd, &tr, &tr.knobs);
    tr.knobs.bind(train_cmd->add_option("--checkpoint-every", tr.checkpoint_every,
                                        "steps between periodic checkpoints (0 = final only)"),
                  "checkpoint-every", &tr.checkpoint_every);
    train_cmd->callback([&] {
        if (!tr.common.config.empty()) tr.knobs.apply_file(tr.common.config);
        run_train(tr);
    });

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "closed-loop success rate of a checkpoint");
    add_common(eval_cmd, &ev.common, &ev.knobs, /*seed_used=*/false);
    ev.knobs.bind(eval_cmd->add_option("--checkpoint", ev.checkpoint, "trained model"),
                  "checkpoint", &ev.checkpoint);
    ev.knobs.bind(eval_cmd->add_option("--dataset", ev.dataset, "held-out pairs (jsonl)"),
                  "dataset", &ev.dataset);
    ev.knobs.bind(eval_cmd->add_option("--k", ev.k, "waypoint lookahead (<0 → checkpoint's)"),
                  "k", &ev.k);
    ev.knobs.bind(eval_cmd->add_option("--budget-mult", ev.budget_mult,
                                       "step budget multiple of the demonstration length"),
                  "budget-mult", &ev.budget_mult);
    ev.knobs.bind(eval_cmd->add_option("--budget-add", ev.budget_add, "additive step budget"),
                  "budget-add", &ev.budget_add);
    eval_cmd->callback([&] {
        if (!ev.common.config.empty()) ev.knobs.apply_file(ev.common.config);
        run_eval(ev);
    });

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate-k", "train/eval grid over waypoint lookaheads");
    add_common(ablate_cmd, &ab.common, &ab.knobs);
    ab.knobs.bind(ablate_cmd->add_option("--dataset", ab.dataset, "training pairs (jsonl)"),
                  "dataset", &ab.dataset);
    ab.knobs.bind(
        ablate_cmd->add_option("--test-dataset", ab.test_dataset, "held-out pairs (jsonl)"),
        "test-dataset", &ab.test_dataset);
    ab.knobs.bind(ablate_cmd->add_option("--ks", ab.ks, "comma-separated lookahead values"), "ks",
                  &ab.ks);
    ab.knobs.bind(ablate_cmd->add_option("--trials", ab.trials, "seeds per k (seed..seed+n-1)"),
                  "trials", &ab.trials);
    add_train_knobs(ablate_cmd, &ab.train, &ab.knobs);
    ablate_cmd->callback([&] {
        if (!ab.common.config.empty()) ab.knobs.apply_file(ab.common.config);
        run_ablate(ab);
    });

    SweepArgs sw;
    auto* sweep_cmd =
        app.add_subcommand("sweep-len", "success rate vs task-sequence length per variant");
    add_common(sweep_cmd, &sw.common, &sw.knobs);
    sw.knobs.bind(sweep_cmd->add_option("--dataset", sw.dataset, "training pairs (jsonl)"),
                  "dataset", &sw.dataset);
    sw.knobs.bind(sweep_cmd->add_option("--lengths", sw.lengths, "comma-separated lengths"),
                  "lengths", &sw.lengths);
    sw.knobs.bind(sweep_cmd->add_option("--episodes-per-length", sw.episodes_per_length,
                                        "fresh test episodes per length"),
                  "episodes-per-length", &sw.episodes_per_length);
    sw.knobs.bind(sweep_cmd->add_option("--variants", sw.variants, "comma-separated variants"),
                  "variants", &sw.variants);
    sw.knobs.bind(sweep_cmd->add_option("--trials", sw.trials, "seeds per variant"), "trials",
                  &sw.trials);
    sw.knobs.bind(sweep_cmd->add_option("--k", sw.train.k, "waypoint lookahead"), "k",
                  &sw.train.k);
    add_train_knobs(sweep_cmd, &sw.train, &sw.knobs, /*with_variant=*/false);
    sweep_cmd->callback([&] {
        if (!sw.common.config.empty()) sw.knobs.apply_file(sw.common.config);
        run_sweep(sw);
    });

    PlotArgs pl;
    auto* plot_cmd = app.add_subcommand("plot", "render an experiment CSV as a static SVG");
    add_common(plot_cmd, &pl.common, &pl.knobs, /*seed_used=*/false);
    pl.knobs.bind(plot_cmd->add_option("--input", pl.input, "experiment CSV"), "input",
                  &pl.input);
    pl.knobs.bind(plot_cmd->add_option("--output", pl.output,
                                       "SVG path (default: <out>/<input stem>.svg)"),
                  "output", &pl.output);
    pl.knobs.bind(plot_cmd->add_option("--title", pl.title, "chart title"), "title", &pl.title);
    plot_cmd->callback([&] {
        if (!pl.common.config.empty()) pl.knobs.apply_file(pl.common.config);
        run_plot(pl);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
