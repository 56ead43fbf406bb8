#include "caseil/eval.hpp"

#include "caseil/craftworld.hpp"
#include "caseil/expert.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <ostream>
#include <thread>

namespace caseil::eval {

using compose::Variant;

int default_budget(const datagen::Episode& reference) {
    return 2 * static_cast<int>(reference.trajectory.length()) + 20;
}

namespace {

bool same_multiset(std::vector<craft::TaskKind> a, std::vector<craft::TaskKind> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

int argmax_lowest(const nn::Tensor& logits) {
    int best = 0;
    for (int i = 1; i < logits.cols(); ++i)
        if (logits.data[static_cast<size_t>(i)] > logits.data[static_cast<size_t>(best)]) best = i;
    return best;
}

// Work-stealing loop over n independent jobs. Each job owns its output slot,
// so results are identical for any worker count; the first exception wins.
void run_jobs(int n, int workers, const std::function<void(int)>& fn) {
    if (workers < 1) throw EvalError("workers must be ≥ 1");
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i; (i = next.fetch_add(1)) < n;) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

RolloutOutcome rollout(const compose::Model& m, const craft::GridState& world,
                       const std::vector<craft::TaskKind>& tasks,
                       const datagen::Episode& reference, const craft::GridState* goal_state,
                       int k, int budget) {
    if (!same_multiset(tasks, reference.tasks))
        throw EvalError("rollout: reference episode solves a different task multiset");
    if (k < 0) throw EvalError("rollout: k must be ≥ 0");
    if (m.config.variant != Variant::CpvFull && goal_state == nullptr)
        throw EvalError("rollout: this variant conditions on the goal state");
    if (budget < 0) budget = default_budget(reference);

    const auto& ref_states = reference.trajectory.states;
    const int ref_len = static_cast<int>(reference.trajectory.length());

    RolloutOutcome out;
    craft::GridState state = world;
    compose::Sample s;
    s.u0 = &world;
    s.un = goal_state;
    s.r0 = &ref_states.front();
    s.rt = &ref_states.back();
    for (int t = 0; t < budget; ++t) {
        if (craft::sequence_done(state, tasks)) break;
        const int i = compose::waypoint_index(std::min(t, ref_len), ref_len, ref_len, k);
        s.ut = &state;
        s.ri = &ref_states[static_cast<size_t>(i)];
        const compose::LatentVec goal = compose::goal_vector(m, s);
        const nn::Tensor logits = m.policy.forward(compose::policy_input(m, state, goal));
        state = craft::step(state, static_cast<craft::Action>(argmax_lowest(logits))).first;
        ++out.steps_taken;
    }
    out.success = craft::sequence_done(state, tasks);
    out.tasks_completed = craft::tasks_completed(state, tasks);
    out.termination = out.success ? Termination::AllDone : Termination::StepBudget;
    return out;
}

RolloutOutcome rollout_pair(const compose::Model& m, const datagen::EpisodePair& pair, int k,
                            int budget) {
    return rollout(m, pair.train.world, pair.train.tasks, pair.reference,
                   &pair.train.trajectory.states.back(), k, budget);
}

EvalSummary success_rate(const compose::Model& m,
                         const std::vector<datagen::EpisodePair>& test_pairs, int k,
                         double budget_mult, int budget_add) {
    if (test_pairs.empty()) throw EvalError("success_rate: no test pairs");
    if (budget_mult < 0.0 || budget_add < 0)
        throw EvalError("success_rate: budget multiplier and additive term must be ≥ 0");
    EvalSummary s;
    s.n_episodes = static_cast<int>(test_pairs.size());
    std::vector<double> steps;
    steps.reserve(test_pairs.size());
    for (const auto& pair : test_pairs) {
        const int budget =
            static_cast<int>(std::llround(budget_mult *
                                          static_cast<double>(pair.reference.trajectory.length()))) +
            budget_add;
        const RolloutOutcome out = rollout_pair(m, pair, k, budget);
        if (out.success) ++s.n_success;
        steps.push_back(static_cast<double>(out.steps_taken));
    }
    s.success_rate = static_cast<double>(s.n_success) / static_cast<double>(s.n_episodes);
    double sum = 0.0;
    for (double v : steps) sum += v;
    s.mean_steps = sum / static_cast<double>(s.n_episodes);
    s.std_steps = sample_std(steps);
    const double p = s.success_rate;
    s.ci_half_width = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(s.n_episodes));
    return s;
}

double sample_std(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

void write_csv_header(std::ostream& os) { os << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& os, std::string_view variant, int k, uint64_t seed,
                   const EvalSummary& s) {
    os << variant << ',' << k << ',' << seed << ',' << s.n_episodes << ',' << s.success_rate
       << ',' << s.mean_steps << ',' << s.std_steps << '\n';
}

std::vector<VariantResult> compare_variants(const train::TrainConfig& base,
                                            const std::vector<datagen::EpisodePair>& train_pairs,
                                            const std::vector<datagen::EpisodePair>& test_pairs,
                                            const std::vector<compose::Variant>& variants,
                                            const std::vector<uint64_t>& seeds,
                                            std::ostream* rows_csv, int workers) {
    if (variants.empty() || seeds.empty())
        throw EvalError("compare_variants: need at least one variant and one seed");
    const int V = static_cast<int>(variants.size());
    const int S = static_cast<int>(seeds.size());
    std::vector<EvalSummary> cells(static_cast<size_t>(V) * static_cast<size_t>(S));
    run_jobs(V * S, workers, [&](int j) {
        train::TrainConfig cfg = base;
        cfg.variant = variants[static_cast<size_t>(j / S)];
        cfg.seed = seeds[static_cast<size_t>(j % S)];
        const auto model = train::train_model(cfg, train_pairs);
        cells[static_cast<size_t>(j)] = success_rate(*model, test_pairs, cfg.k);
    });
    if (rows_csv) write_csv_header(*rows_csv);
    std::vector<VariantResult> table;
    for (int vi = 0; vi < V; ++vi) {
        VariantResult row;
        row.variant = variants[static_cast<size_t>(vi)];
        for (int si = 0; si < S; ++si) {
            const EvalSummary& s = cells[static_cast<size_t>(vi * S + si)];
            row.per_seed.push_back(s.success_rate);
            if (rows_csv)
                write_csv_row(*rows_csv, compose::variant_name(row.variant), base.k,
                              seeds[static_cast<size_t>(si)], s);
        }
        row.best = *std::max_element(row.per_seed.begin(), row.per_seed.end());
        double sum = 0.0;
        for (double r : row.per_seed) sum += r;
        row.mean = sum / static_cast<double>(row.per_seed.size());
        row.stddev = sample_std(row.per_seed);
        table.push_back(std::move(row));
    }
    return table;
}

std::vector<KResult> ablate_k(const train::TrainConfig& base,
                              const std::vector<datagen::EpisodePair>& train_pairs,
                              const std::vector<datagen::EpisodePair>& test_pairs,
                              const std::vector<int>& ks, const std::vector<uint64_t>& seeds,
                              std::ostream* csv, int workers) {
    if (ks.empty() || seeds.empty())
        throw EvalError("ablate_k: need at least one k and one seed");
    const int K = static_cast<int>(ks.size());
    const int S = static_cast<int>(seeds.size());
    std::vector<KResult> rows(static_cast<size_t>(K) * static_cast<size_t>(S));
    run_jobs(K * S, workers, [&](int j) {
        train::TrainConfig cfg = base;
        cfg.k = ks[static_cast<size_t>(j / S)];
        cfg.seed = seeds[static_cast<size_t>(j % S)];
        const auto model = train::train_model(cfg, train_pairs);
        rows[static_cast<size_t>(j)] =
            KResult{cfg.k, cfg.seed, success_rate(*model, test_pairs, cfg.k)};
    });
    if (csv) {
        write_csv_header(*csv);
        for (const auto& r : rows)
            write_csv_row(*csv, compose::variant_name(base.variant), r.k, r.seed, r.summary);
    }
    return rows;
}

std::vector<LengthResult> sweep_sequence_length(
    const train::TrainConfig& base, const std::vector<datagen::EpisodePair>& train_pairs,
    const datagen::GenConfig& gen, const std::vector<int>& lengths, int episodes_per_length,
    const std::vector<compose::Variant>& variants, const std::vector<uint64_t>& seeds,
    uint64_t test_seed, std::ostream* csv, int workers) {
    if (lengths.empty() || variants.empty() || seeds.empty())
        throw EvalError("sweep_sequence_length: need lengths, variants and seeds");
    if (episodes_per_length <= 0)
        throw EvalError("sweep_sequence_length: episodes_per_length must be positive");

    // One test set per length bucket, shared by every variant and seed.
    const std::vector<datagen::TaskMultiset> feasible = datagen::enumerate_feasible_multisets(gen);
    std::vector<std::vector<datagen::EpisodePair>> buckets;
    for (const int len : lengths) {
        std::vector<datagen::TaskMultiset> allowed;
        for (const auto& ms : feasible)
            if (static_cast<int>(ms.size()) == len) allowed.push_back(ms);
        if (allowed.empty())
            throw EvalError("sweep_sequence_length: no feasible multisets of length " +
                            std::to_string(len));
        buckets.push_back(datagen::gen_dataset(mix_seed(test_seed, static_cast<uint64_t>(len)),
                                               episodes_per_length, allowed, gen));
    }

    const int V = static_cast<int>(variants.size());
    const int S = static_cast<int>(seeds.size());
    const int L = static_cast<int>(lengths.size());
    std::vector<LengthResult> rows(static_cast<size_t>(V) * static_cast<size_t>(S) *
                                   static_cast<size_t>(L));
    run_jobs(V * S, workers, [&](int j) {
        train::TrainConfig cfg = base;
        cfg.variant = variants[static_cast<size_t>(j / S)];
        cfg.seed = seeds[static_cast<size_t>(j % S)];
        const auto model = train::train_model(cfg, train_pairs);
        for (int li = 0; li < L; ++li)
            rows[static_cast<size_t>(j * L + li)] =
                LengthResult{lengths[static_cast<size_t>(li)], cfg.variant, cfg.seed,
                             success_rate(*model, buckets[static_cast<size_t>(li)], cfg.k)};
    });
    if (csv) {
        *csv << "length," << kCsvHeader << '\n';
        for (const auto& r : rows) {
            *csv << r.length << ',';
            write_csv_row(*csv, compose::variant_name(r.variant), base.k, r.seed, r.summary);
        }
    }
    return rows;
}

}  // namespace caseil::eval
