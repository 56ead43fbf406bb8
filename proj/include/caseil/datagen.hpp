#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "caseil/craftworld.hpp"
#include "caseil/expert.hpp"
#include "caseil/rng.hpp"

namespace caseil::datagen {

struct GenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Map and episode generation knobs. Default object counts keep every task
// kind feasible: one tool of each kind plus two of each consumable target.
struct GenConfig {
    int width = 8;
    int height = 8;
    std::array<int, craft::kObjectKindCount> counts = [] {
        std::array<int, craft::kObjectKindCount> c{};
        c[static_cast<size_t>(craft::ObjectKind::Tree)] = 2;
        c[static_cast<size_t>(craft::ObjectKind::Wheat)] = 2;
        c[static_cast<size_t>(craft::ObjectKind::Rock)] = 2;
        c[static_cast<size_t>(craft::ObjectKind::Axe)] = 1;
        c[static_cast<size_t>(craft::ObjectKind::Hammer)] = 1;
        return c;
    }();
    int min_tasks = 2;
    int max_tasks = 8;
    int max_retries = 16;  // map resamples on planner failure before giving up
};

struct Episode {
    uint64_t map_seed = 0;
    craft::GridState world;                 // initial state
    std::vector<craft::TaskKind> tasks;     // order as planned
    expert::Trajectory trajectory;

    bool operator==(const Episode&) const = default;
};

// Same task multiset solved on two independently sampled maps. `train` plays
// the imitation episode; `reference` is the one-shot demonstration.
struct EpisodePair {
    Episode train;
    Episode reference;

    bool operator==(const EpisodePair&) const = default;
};

// Canonical form: sorted by task enum value.
using TaskMultiset = std::vector<craft::TaskKind>;

struct TaskSplit {
    std::vector<TaskMultiset> train_sequences;
    std::vector<TaskMultiset> test_sequences;
};

enum class SplitMode {
    Composition,  // disjoint sets of task multisets
    KindHoldout,  // one task kind appears only in test sequences
};

struct SplitSpec {
    SplitMode mode = SplitMode::Composition;
    double holdout_fraction = 0.25;                        // Composition
    craft::TaskKind excluded = craft::TaskKind::BuildHouse;  // KindHoldout
};

// Uniform non-overlapping placement of config.counts objects plus the agent.
// Deterministic in the seed. Throws GenError when the objects cannot fit.
craft::GridState random_map(uint64_t rng_seed, const GenConfig& config);

// Random task multiset of length in [min_tasks, max_tasks] that the config's
// object counts can support (resource caps, production chains included).
TaskMultiset sample_tasks(Rng& rng, const GenConfig& config);

// Every resource-feasible multiset with lengths in [min_tasks, max_tasks],
// canonically sorted, enumerated in a fixed order.
std::vector<TaskMultiset> enumerate_feasible_multisets(const GenConfig& config);

// Two episodes with the same task multiset on different maps. Resamples maps
// up to config.max_retries times when the planner rejects one.
EpisodePair gen_pair(uint64_t rng_seed, const TaskMultiset& tasks, const GenConfig& config);

// Deterministic partition of the feasible multisets. Composition mode holds
// out a fraction of whole multisets; KindHoldout sends every multiset that
// mentions the excluded kind to the test side. Degenerate splits (either side
// empty) raise GenError.
TaskSplit split_tasks(const GenConfig& config, const SplitSpec& spec, uint64_t rng_seed);

// n_pairs episode pairs whose multisets are drawn uniformly from `allowed`.
std::vector<EpisodePair> gen_dataset(uint64_t seed, int n_pairs,
                                     const std::vector<TaskMultiset>& allowed,
                                     const GenConfig& config);

// Line-delimited JSON records, one pair per line:
//   {"version":1,"pair_id":i,
//    "train":{"map_seed":...,"grid":"<ascii>","tasks":[...],"actions":[...]},
//    "reference":{...}}
// States are reconstructed by replaying actions from the parsed grid, so the
// reader re-validates every trajectory. Malformed records and version
// mismatches raise GenError naming the line.
void write_dataset(const std::vector<EpisodePair>& pairs, const std::string& path);
std::vector<EpisodePair> read_dataset(const std::string& path);

}  // namespace caseil::datagen
