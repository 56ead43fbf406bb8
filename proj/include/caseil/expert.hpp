#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "caseil/craftworld.hpp"

namespace caseil::expert {

struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Trajectory {
    std::vector<craft::GridState> states;  // length L+1
    std::vector<craft::Action> actions;    // length L

    size_t length() const { return actions.size(); }
    bool operator==(const Trajectory&) const = default;
};

// plan_sequence output: the trajectory plus the realized task order. Tasks
// completed incidentally (a transformation fired while walking somewhere else)
// are recorded at the position where their counter was first satisfied.
struct SequencePlan {
    Trajectory trajectory;
    std::vector<craft::TaskKind> order;
};

// Shortest walk from the agent to a cell satisfying `goal`. Deterministic:
// breadth-first with neighbor expansion in fixed action order (N,S,E,W); among
// equally near satisfying cells the row-major smallest wins. `what` names the
// goal in the unreachable-goal error.
std::vector<craft::Action> bfs_actions(const craft::GridState& state,
                                       const std::function<bool(craft::Position)>& goal,
                                       const std::string& what);

// Cheapest single-task plan from `state`, chosen by exact cost minimization
// over every concrete way of running the task recipe: which tool instance,
// which target instance, where to drop a carried item first, and (MakeBread
// only) optionally relocating a wheat next to the axe when that is shorter.
// Ties break on a fixed key so plans are reproducible. The required tool and
// target must already exist on the map (production chains are sequenced by
// plan_sequence).
std::vector<craft::Action> plan_task(const craft::GridState& state, craft::TaskKind task);

// Optimal-within-budget plan for a task multiset.
//   |tasks| <= exact_threshold : exhaustive search over task orders x concrete
//                  recipe instantiations, simulating between tasks so
//                  incidental completions are credited — exact on open grids.
//   |tasks| <= perm_threshold  : exhaustive over dependency-respecting orders,
//                  each task expanded greedily via plan_task.
//   larger                     : greedy cheapest-next-task.
// Throws PlanError when the multiset is infeasible, naming the blocking task.
SequencePlan plan_sequence(const craft::GridState& state, std::vector<craft::TaskKind> tasks,
                           int exact_threshold = 2, int perm_threshold = 5);

// Replays actions from states[0]; true iff every stored state matches the
// replay and the final state completes the multiset. Fills `why` on failure.
bool validate(const Trajectory& traj, std::span<const craft::TaskKind> tasks,
              std::string* why = nullptr);

// Exhaustive breadth-first search over the full joint state space (grid
// contents, agent, carried item, capped task counters). Returns the length of
// the shortest action sequence completing the multiset, or nullopt if none
// exists within depth_cap. Exponential; intended for <=2 tasks on <=5x5 maps
// where it certifies plan_sequence optimality.
std::optional<int> oracle_shortest_length(const craft::GridState& state,
                                          std::span<const craft::TaskKind> tasks, int depth_cap);

}  // namespace caseil::expert
