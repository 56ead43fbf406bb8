#include "caseil/datagen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace caseil::datagen {

using craft::GridState;
using craft::ObjectKind;
using craft::TaskKind;
using nlohmann::json;

namespace {

int kind_count(const std::array<int, craft::kObjectKindCount>& counts, ObjectKind k) {
    return counts[static_cast<size_t>(k)];
}

// Resource accounting mirror of the planner's feasibility rule: consumable
// targets must be present or producible, tools must exist.
bool multiset_feasible(const std::array<int, craft::kTaskKindCount>& mult,
                       const GenConfig& cfg) {
    const auto m = [&](TaskKind t) { return mult[static_cast<size_t>(t)]; };
    const auto c = [&](ObjectKind k) { return kind_count(cfg.counts, k); };
    if ((m(TaskKind::ChopTree) || m(TaskKind::MakeBread)) && c(ObjectKind::Axe) < 1) return false;
    if ((m(TaskKind::BuildHouse) || m(TaskKind::BreakRock)) && c(ObjectKind::Hammer) < 1)
        return false;
    if (m(TaskKind::ChopTree) > c(ObjectKind::Tree)) return false;
    if (m(TaskKind::MakeBread) > c(ObjectKind::Wheat)) return false;
    if (m(TaskKind::BreakRock) > c(ObjectKind::Rock)) return false;
    if (m(TaskKind::BuildHouse) > c(ObjectKind::Log) + m(TaskKind::ChopTree)) return false;
    if (m(TaskKind::EatBread) > c(ObjectKind::Bread) + m(TaskKind::MakeBread)) return false;
    return true;
}

std::array<int, craft::kTaskKindCount> multiplicities(const TaskMultiset& tasks) {
    std::array<int, craft::kTaskKindCount> mult{};
    for (const TaskKind t : tasks) ++mult[static_cast<size_t>(t)];
    return mult;
}

Episode make_episode(uint64_t map_seed_base, const TaskMultiset& tasks, const GenConfig& cfg) {
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        const uint64_t map_seed = mix_seed(map_seed_base, static_cast<uint64_t>(attempt));
        GridState world = random_map(map_seed, cfg);
        try {
            auto plan = expert::plan_sequence(world, tasks);
            return Episode{map_seed, std::move(world), std::move(plan.order),
                           std::move(plan.trajectory)};
        } catch (const expert::PlanError&) {
            // resample the map
        }
    }
    throw GenError("gen_pair: no plannable map within " + std::to_string(cfg.max_retries) +
                   " retries");
}

json episode_json(const Episode& e) {
    json j;
    j["map_seed"] = e.map_seed;
    j["grid"] = craft::render_ascii(e.world);
    json tasks = json::array();
    for (const TaskKind t : e.tasks) tasks.push_back(craft::to_string(t));
    j["tasks"] = std::move(tasks);
    json actions = json::array();
    for (const craft::Action a : e.trajectory.actions) actions.push_back(static_cast<int>(a));
    j["actions"] = std::move(actions);
    return j;
}

Episode episode_from_json(const json& j) {
    Episode e;
    e.map_seed = j.at("map_seed").get<uint64_t>();
    e.world = craft::parse_ascii(j.at("grid").get<std::string>());
    for (const auto& name : j.at("tasks")) {
        const auto task = craft::task_from_string(name.get<std::string>());
        if (!task) throw GenError("unknown task name '" + name.get<std::string>() + "'");
        e.tasks.push_back(*task);
    }
    e.trajectory.states.push_back(e.world);
    for (const auto& raw : j.at("actions")) {
        const int a = raw.get<int>();
        if (a < 0 || a >= craft::kActionCount)
            throw GenError("action index " + std::to_string(a) + " out of range");
        e.trajectory.actions.push_back(static_cast<craft::Action>(a));
        e.trajectory.states.push_back(
            craft::step(e.trajectory.states.back(), static_cast<craft::Action>(a)).first);
    }
    if (!craft::sequence_done(e.trajectory.states.back(), e.tasks))
        throw GenError("trajectory does not complete its task list");
    return e;
}

}  // namespace

GridState random_map(uint64_t rng_seed, const GenConfig& config) {
    int total = 0;
    for (const int c : config.counts) {
        if (c < 0) throw GenError("random_map: negative object count");
        total += c;
    }
    if (config.width < 1 || config.height < 1)
        throw GenError("random_map: non-positive dimensions");
    const int cells = config.width * config.height;
    if (total + 1 > cells)
        throw GenError("random_map: " + std::to_string(total) + " objects plus the agent do not fit on " +
                       std::to_string(config.width) + "x" + std::to_string(config.height));

    Rng rng(rng_seed);
    std::vector<int> order(static_cast<size_t>(cells));
    for (int i = 0; i < cells; ++i) order[i] = i;
    // Fisher-Yates prefix: the first total+1 entries are distinct uniform cells.
    for (int i = 0; i <= total && i + 1 < cells; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(cells - i)));
        std::swap(order[i], order[j]);
    }
    std::vector<std::pair<craft::Position, ObjectKind>> placements;
    int next = 0;
    for (int k = 0; k < craft::kObjectKindCount; ++k)
        for (int i = 0; i < config.counts[k]; ++i) {
            const int cell = order[next++];
            placements.push_back(
                {{cell / config.width, cell % config.width}, static_cast<ObjectKind>(k)});
        }
    const int agent_cell = order[next];
    return craft::new_world(config.width, config.height, placements,
                            {agent_cell / config.width, agent_cell % config.width});
}

TaskMultiset sample_tasks(Rng& rng, const GenConfig& config) {
    for (int attempt = 0; attempt < 256; ++attempt) {
        const int len =
            config.min_tasks + static_cast<int>(rng.below(
                                   static_cast<uint64_t>(config.max_tasks - config.min_tasks + 1)));
        TaskMultiset tasks;
        for (int i = 0; i < len; ++i)
            tasks.push_back(static_cast<TaskKind>(rng.below(craft::kTaskKindCount)));
        if (multiset_feasible(multiplicities(tasks), config)) return tasks;
    }
    throw GenError("sample_tasks: no feasible multiset found; config too restrictive");
}

std::vector<TaskMultiset> enumerate_feasible_multisets(const GenConfig& config) {
    std::vector<TaskMultiset> out;
    TaskMultiset current;
    // Non-decreasing kind sequences == multisets, enumerated lexicographically
    // per length.
    const auto rec = [&](auto&& self, int first_kind) -> void {
        const int len = static_cast<int>(current.size());
        if (len >= config.min_tasks && multiset_feasible(multiplicities(current), config))
            out.push_back(current);
        if (len == config.max_tasks) return;
        for (int k = first_kind; k < craft::kTaskKindCount; ++k) {
            current.push_back(static_cast<TaskKind>(k));
            self(self, k);
            current.pop_back();
        }
    };
    rec(rec, 0);
    std::stable_sort(out.begin(), out.end(),
                     [](const TaskMultiset& a, const TaskMultiset& b) {
                         if (a.size() != b.size()) return a.size() < b.size();
                         return a < b;
                     });
    return out;
}

EpisodePair gen_pair(uint64_t rng_seed, const TaskMultiset& tasks, const GenConfig& config) {
    if (static_cast<int>(tasks.size()) < 1)
        throw GenError("gen_pair: empty task multiset");
    if (!multiset_feasible(multiplicities(tasks), config))
        throw GenError("gen_pair: task multiset infeasible under the config's object counts");
    EpisodePair pair{make_episode(stream_seed(rng_seed, "train-map"), tasks, config),
                     make_episode(stream_seed(rng_seed, "reference-map"), tasks, config)};
    return pair;
}

TaskSplit split_tasks(const GenConfig& config, const SplitSpec& spec, uint64_t rng_seed) {
    auto all = enumerate_feasible_multisets(config);
    if (all.empty()) throw GenError("split_tasks: no feasible multisets under this config");
    TaskSplit split;
    if (spec.mode == SplitMode::KindHoldout) {
        for (auto& m : all) {
            const bool has = std::find(m.begin(), m.end(), spec.excluded) != m.end();
            (has ? split.test_sequences : split.train_sequences).push_back(std::move(m));
        }
    } else {
        // Stratified by multiset size: hold out the same fraction of every
        // size bucket, so the held-out combinations span short and long
        // sequences instead of whichever extreme the shuffle happens to draw.
        // `all` arrives sorted by size, so buckets are contiguous runs.
        Rng rng(stream_seed(rng_seed, "split"));
        size_t lo = 0;
        while (lo < all.size()) {
            size_t hi = lo;
            while (hi < all.size() && all[hi].size() == all[lo].size()) ++hi;
            for (size_t i = lo; i + 1 < hi; ++i) {
                const size_t j = i + rng.below(hi - i);
                std::swap(all[i], all[j]);
            }
            const auto n_test = static_cast<size_t>(
                std::llround(static_cast<double>(hi - lo) * spec.holdout_fraction));
            for (size_t i = lo; i < hi; ++i)
                (i - lo < n_test ? split.test_sequences : split.train_sequences)
                    .push_back(std::move(all[i]));
            lo = hi;
        }
        if (split.test_sequences.empty() || split.train_sequences.empty())
            throw GenError("split_tasks: holdout fraction leaves an empty side");
        const auto canon = [](std::vector<TaskMultiset>& v) {
            std::sort(v.begin(), v.end(), [](const TaskMultiset& a, const TaskMultiset& b) {
                if (a.size() != b.size()) return a.size() < b.size();
                return a < b;
            });
        };
        canon(split.train_sequences);
        canon(split.test_sequences);
    }
    if (split.train_sequences.empty() || split.test_sequences.empty())
        throw GenError("split_tasks: degenerate split");
    return split;
}

std::vector<EpisodePair> gen_dataset(uint64_t seed, int n_pairs,
                                     const std::vector<TaskMultiset>& allowed,
                                     const GenConfig& config) {
    if (allowed.empty()) throw GenError("gen_dataset: empty multiset pool");
    if (n_pairs < 0) throw GenError("gen_dataset: negative pair count");
    Rng pick(stream_seed(seed, "pick-multiset"));
    std::vector<EpisodePair> out;
    out.reserve(static_cast<size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        const TaskMultiset& tasks = allowed[pick.below(allowed.size())];
        out.push_back(gen_pair(mix_seed(seed, static_cast<uint64_t>(i)), tasks, config));
    }
    return out;
}

void write_dataset(const std::vector<EpisodePair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: byte-identical across platforms
    if (!out) throw GenError("write_dataset: cannot open " + path);
    for (size_t i = 0; i < pairs.size(); ++i) {
        json j;
        j["version"] = 1;
        j["pair_id"] = i;
        j["train"] = episode_json(pairs[i].train);
        j["reference"] = episode_json(pairs[i].reference);
        out << j.dump() << '\n';
    }
    if (!out) throw GenError("write_dataset: write failed for " + path);
}

std::vector<EpisodePair> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GenError("read_dataset: cannot open " + path);
    std::vector<EpisodePair> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path + ":" + std::to_string(lineno) + ": ";
        try {
            const json j = json::parse(line);
            if (!j.contains("version"))
                throw GenError("record missing version field");
            if (j.at("version").get<int>() != 1)
                throw GenError("unsupported dataset version " + j.at("version").dump());
            EpisodePair pair{episode_from_json(j.at("train")),
                             episode_from_json(j.at("reference"))};
            out.push_back(std::move(pair));
        } catch (const GenError& e) {
            throw GenError(where + e.what());
        } catch (const std::exception& e) {
            throw GenError(where + "malformed record: " + e.what());
        }
    }
    return out;
}

}  // namespace caseil::datagen
