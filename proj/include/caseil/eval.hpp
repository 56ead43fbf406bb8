#pragma once

#include "caseil/compose.hpp"
#include "caseil/datagen.hpp"
#include "caseil/train.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace caseil::eval {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Termination { AllDone, StepBudget };

struct RolloutOutcome {
    bool success = false;  // ⇔ every task instance complete within budget
    int steps_taken = 0;
    int tasks_completed = 0;
    Termination termination = Termination::StepBudget;
};

// budget < 0 → the default 2·|reference| + 20.
int default_budget(const datagen::Episode& reference);

// Closed-loop greedy rollout (argmax logits, ties to the lowest action
// index): at step t the waypoint is R_I with I = min(t, T) + k capped at T —
// the reference horizon stands in for the unknown episode length, and past it
// the waypoint pins to the final reference state. `goal_state` is the
// ground-truth goal configuration of the evaluation world; every variant
// except CPV_FULL conditions on it and requires it non-null. No mutation
// outside the returned outcome; fully deterministic.
RolloutOutcome rollout(const compose::Model& m, const craft::GridState& world,
                       const std::vector<craft::TaskKind>& tasks,
                       const datagen::Episode& reference, const craft::GridState* goal_state,
                       int k, int budget = -1);

// One evaluation pair: the train episode supplies the world, the task
// multiset and the privileged goal state; the reference episode is the
// one-shot demonstration.
RolloutOutcome rollout_pair(const compose::Model& m, const datagen::EpisodePair& pair, int k,
                            int budget = -1);

struct EvalSummary {
    int n_episodes = 0;
    int n_success = 0;
    double success_rate = 0.0;   // exact ratio n_success / n_episodes
    double mean_steps = 0.0;     // over all episodes, budget-capped
    double std_steps = 0.0;      // sample std of steps (0 when n < 2)
    double ci_half_width = 0.0;  // binomial 95% normal approximation
};

// Per-episode budget: round(budget_mult · |reference|) + budget_add.
EvalSummary success_rate(const compose::Model& m,
                         const std::vector<datagen::EpisodePair>& test_pairs, int k,
                         double budget_mult = 2.0, int budget_add = 20);

// Sample standard deviation (n−1 denominator); 0 for fewer than two values.
double sample_std(std::span<const double> values);

// Fixed row schema shared by every experiment CSV.
inline constexpr const char* kCsvHeader = "variant,k,seed,n_episodes,success_rate,mean_steps,std";
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, std::string_view variant, int k, uint64_t seed,
                   const EvalSummary& s);

// Trains base with each (variant, seed) and evaluates on the test pairs;
// optional per-run rows in the fixed schema. Aggregates are over seeds.
// workers > 1 trains/evaluates independent cells on that many threads; the
// per-cell numbers and row order are scheduling-independent.
struct VariantResult {
    compose::Variant variant;
    std::vector<double> per_seed;  // success rate, in seed order
    double best = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
};
std::vector<VariantResult> compare_variants(const train::TrainConfig& base,
                                            const std::vector<datagen::EpisodePair>& train_pairs,
                                            const std::vector<datagen::EpisodePair>& test_pairs,
                                            const std::vector<compose::Variant>& variants,
                                            const std::vector<uint64_t>& seeds,
                                            std::ostream* rows_csv = nullptr, int workers = 1);

// Full (k × seed) sweep: trains with lookahead k, evaluates with the same k.
struct KResult {
    int k = 0;
    uint64_t seed = 0;
    EvalSummary summary;
};
std::vector<KResult> ablate_k(const train::TrainConfig& base,
                              const std::vector<datagen::EpisodePair>& train_pairs,
                              const std::vector<datagen::EpisodePair>& test_pairs,
                              const std::vector<int>& ks, const std::vector<uint64_t>& seeds,
                              std::ostream* csv = nullptr, int workers = 1);

// Per (variant, seed): train once on train_pairs, then evaluate against a
// fresh test set per sequence length (multisets of exactly that length).
// CSV columns: length, then the fixed schema.
struct LengthResult {
    int length = 0;
    compose::Variant variant;
    uint64_t seed = 0;
    EvalSummary summary;
};
std::vector<LengthResult> sweep_sequence_length(
    const train::TrainConfig& base, const std::vector<datagen::EpisodePair>& train_pairs,
    const datagen::GenConfig& gen, const std::vector<int>& lengths, int episodes_per_length,
    const std::vector<compose::Variant>& variants, const std::vector<uint64_t>& seeds,
    uint64_t test_seed, std::ostream* csv = nullptr, int workers = 1);

}  // namespace caseil::eval
