#include "caseil/expert.hpp"

#include <algorithm>
#include <climits>
#include <cstdlib>
#include <deque>
#include <unordered_set>

namespace caseil::expert {

using craft::Action;
using craft::GridState;
using craft::ObjectKind;
using craft::Position;
using craft::TaskEvent;
using craft::TaskKind;

namespace {

int manhattan(Position a, Position b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

struct Recipe {
    ObjectKind tool;
    ObjectKind target;
};

// EatBread has no recipe: it is a bare PickUp on a Bread cell.
std::optional<Recipe> recipe_for(TaskKind task) {
    switch (task) {
        case TaskKind::ChopTree: return Recipe{ObjectKind::Axe, ObjectKind::Tree};
        case TaskKind::BuildHouse: return Recipe{ObjectKind::Hammer, ObjectKind::Log};
        case TaskKind::MakeBread: return Recipe{ObjectKind::Axe, ObjectKind::Wheat};
        case TaskKind::BreakRock: return Recipe{ObjectKind::Hammer, ObjectKind::Rock};
        case TaskKind::EatBread: return std::nullopt;
    }
    throw std::logic_error("unknown task");
}

std::vector<Position> cells_with(const GridState& s, ObjectKind kind) {
    std::vector<Position> out;
    for (int r = 0; r < s.height(); ++r)
        for (int c = 0; c < s.width(); ++c)
            if (s.at({r, c}) == kind) out.push_back({r, c});
    return out;
}

std::vector<Position> empty_cells(const GridState& s) {
    std::vector<Position> out;
    for (int r = 0; r < s.height(); ++r)
        for (int c = 0; c < s.width(); ++c)
            if (!s.at({r, c})) out.push_back({r, c});
    return out;
}

// Cells a carried item can be dropped on. A Rock cell qualifies while carrying
// the Hammer: entering it breaks the rock first, leaving the cell empty.
std::vector<Position> drop_spots(const GridState& s, ObjectKind carried) {
    std::vector<Position> out = empty_cells(s);
    if (carried == ObjectKind::Hammer) {
        for (const Position p : cells_with(s, ObjectKind::Rock)) out.push_back(p);
        std::sort(out.begin(), out.end(), [](Position a, Position b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
    }
    return out;
}

struct Leg {
    Position to;
    std::optional<Action> act;  // PickUp or Drop after arriving
};

// One fully instantiated way of running a task recipe. `cost` is the exact
// realized action count (legs walk unobstructed, so leg length == Manhattan
// distance). `key` orders equal-cost strategies: family rank, then the leg
// cells row-major, making plans reproducible.
struct Strategy {
    int cost = 0;
    std::vector<int> key;
    std::vector<Leg> legs;
};

Strategy make_strategy(Position start, int family, std::vector<Leg> legs) {
    Strategy st;
    st.key.push_back(family);
    Position cur = start;
    for (const Leg& leg : legs) {
        st.cost += manhattan(cur, leg.to);
        if (leg.act) ++st.cost;
        st.key.push_back(leg.to.row);
        st.key.push_back(leg.to.col);
        cur = leg.to;
    }
    st.legs = std::move(legs);
    return st;
}

bool strategy_less(const Strategy& a, const Strategy& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.key < b.key;
}

std::vector<Position> neighbors(const GridState& s, Position p) {
    std::vector<Position> out;
    for (const Position d : {Position{-1, 0}, Position{1, 0}, Position{0, 1}, Position{0, -1}}) {
        const Position q{p.row + d.row, p.col + d.col};
        if (s.in_bounds(q)) out.push_back(q);
    }
    return out;
}

// Every concrete plan candidate for one task from this state. Families:
//   0 carrying the tool: walk onto a target
//   1 carrying the tool while standing on a target: bounce off and re-enter
//     (transformations fire on entry only)
//   2 hands free: fetch a tool, walk onto a target
//   3 carrying the wrong item: drop it, fetch the tool, walk onto a target
//   4 MakeBread, hands free: relocate a wheat next to the axe when the axe is
//     far — carry wheat to a spot, drop, fetch axe, re-enter the spot
//   5 family 4 with a leading drop of the wrong item
//   6 MakeBread while already carrying wheat: drop it, fetch axe, re-enter
// EatBread reuses ranks 0 (bare pickup) and 3 (drop first).
// Returns an empty list when required objects are missing from the map.
std::vector<Strategy> enumerate_strategies(const GridState& s, TaskKind task) {
    std::vector<Strategy> out;
    const Position pos = s.agent();
    const auto rec = recipe_for(task);
    if (!rec) {
        const auto breads = cells_with(s, ObjectKind::Bread);
        if (!s.carried()) {
            for (const Position b : breads)
                out.push_back(make_strategy(pos, 0, {{b, Action::PickUp}}));
        } else {
            for (const Position e : drop_spots(s, *s.carried()))
                for (const Position b : breads)
                    out.push_back(
                        make_strategy(pos, 3, {{e, Action::Drop}, {b, Action::PickUp}}));
        }
        return out;
    }

    const auto tools = cells_with(s, rec->tool);
    const auto targets = cells_with(s, rec->target);
    const bool carrying_tool = s.carried() == rec->tool;

    if (carrying_tool) {
        for (const Position t : targets) {
            if (t == pos) {
                for (const Position nb : neighbors(s, pos))
                    out.push_back(make_strategy(pos, 1, {{nb, std::nullopt}, {t, std::nullopt}}));
            } else {
                out.push_back(make_strategy(pos, 0, {{t, std::nullopt}}));
            }
        }
        return out;
    }

    if (!s.carried()) {
        for (const Position a : tools)
            for (const Position t : targets)
                out.push_back(make_strategy(pos, 2, {{a, Action::PickUp}, {t, std::nullopt}}));
        if (task == TaskKind::MakeBread) {
            for (const Position w : targets)
                for (const Position e : empty_cells(s))
                    for (const Position a : tools)
                        out.push_back(make_strategy(pos, 4,
                                                    {{w, Action::PickUp},
                                                     {e, Action::Drop},
                                                     {a, Action::PickUp},
                                                     {e, std::nullopt}}));
        }
        return out;
    }

    // Carrying something other than the required tool.
    for (const Position e0 : drop_spots(s, *s.carried()))
        for (const Position a : tools)
            for (const Position t : targets)
                out.push_back(make_strategy(
                    pos, 3, {{e0, Action::Drop}, {a, Action::PickUp}, {t, std::nullopt}}));
    if (task == TaskKind::MakeBread) {
        if (*s.carried() == ObjectKind::Wheat) {
            for (const Position e : empty_cells(s))
                for (const Position a : tools)
                    out.push_back(make_strategy(
                        pos, 6, {{e, Action::Drop}, {a, Action::PickUp}, {e, std::nullopt}}));
        }
        for (const Position e0 : drop_spots(s, *s.carried()))
            for (const Position w : targets)
                for (const Position e : empty_cells(s)) {
                    if (e == e0) continue;  // e0 holds the dropped item now
                    for (const Position a : tools)
                        out.push_back(make_strategy(pos, 5,
                                                    {{e0, Action::Drop},
                                                     {w, Action::PickUp},
                                                     {e, Action::Drop},
                                                     {a, Action::PickUp},
                                                     {e, std::nullopt}}));
                }
    }
    return out;
}

struct SimResult {
    std::vector<Action> actions;
    GridState state;
};

// Executes a strategy leg by leg. Returns nullopt when a leg's action fails
// (e.g. the drop cell got occupied) — such candidates are simply skipped.
std::optional<SimResult> run_strategy(const GridState& start, const Strategy& st) {
    SimResult sim{{}, start};
    for (const Leg& leg : st.legs) {
        const Position to = leg.to;
        const auto walk =
            bfs_actions(sim.state, [to](Position p) { return p == to; }, "strategy leg");
        for (const Action a : walk) {
            auto [nxt, rep] = craft::step(sim.state, a);
            if (rep.blocked) return std::nullopt;
            sim.state = std::move(nxt);
            sim.actions.push_back(a);
        }
        if (leg.act) {
            auto [nxt, rep] = craft::step(sim.state, *leg.act);
            const bool ok = *leg.act == Action::PickUp ? (rep.picked_up || rep.ate_bread)
                                                       : rep.dropped;
            if (!ok) return std::nullopt;
            sim.state = std::move(nxt);
            sim.actions.push_back(*leg.act);
        }
    }
    return sim;
}

std::string missing_prereq(const GridState& s, TaskKind task) {
    const std::string name = craft::to_string(task);
    const auto rec = recipe_for(task);
    if (!rec) return name + " requires Bread on the map";
    const bool have_tool = s.carried() == rec->tool || !cells_with(s, rec->tool).empty();
    if (!have_tool) return name + " requires " + craft::to_string(rec->tool);
    return name + " requires " + craft::to_string(rec->target);
}

// Multiset bookkeeping. Counters are monotone, so progress is measured as the
// increase over the episode's starting counters.
struct Needs {
    std::array<int, craft::kTaskKindCount> mult{};
    std::array<uint32_t, craft::kTaskKindCount> base{};
};

Needs make_needs(const GridState& start, std::span<const TaskKind> tasks) {
    Needs n;
    for (const TaskKind t : tasks) ++n.mult[static_cast<size_t>(t)];
    for (int k = 0; k < craft::kTaskKindCount; ++k)
        n.base[k] = start.event_count(event_for(static_cast<TaskKind>(k)));
    return n;
}

int units_left(const GridState& s, const Needs& n, int k) {
    const auto ev = event_for(static_cast<TaskKind>(k));
    const int64_t done = static_cast<int64_t>(s.event_count(ev)) - n.base[k];
    return n.mult[k] - static_cast<int>(std::clamp<int64_t>(done, 0, n.mult[k]));
}

int total_left(const GridState& s, const Needs& n) {
    int total = 0;
    for (int k = 0; k < craft::kTaskKindCount; ++k) total += units_left(s, n, k);
    return total;
}

// Feasibility by resource accounting: every consumable target must be present
// or producible by another task in the multiset.
void check_feasible(const GridState& s, const Needs& n) {
    std::array<int, craft::kObjectKindCount> c{};
    for (int r = 0; r < s.height(); ++r)
        for (int col = 0; col < s.width(); ++col)
            if (const auto k = s.at({r, col})) ++c[static_cast<size_t>(*k)];
    if (s.carried()) ++c[static_cast<size_t>(*s.carried())];
    const auto count = [&](ObjectKind k) { return c[static_cast<size_t>(k)]; };
    const auto fail = [](TaskKind t, const std::string& why) {
        throw PlanError(std::string("infeasible task multiset: ") + craft::to_string(t) + " " +
                        why);
    };
    const auto mult = [&](TaskKind t) { return n.mult[static_cast<size_t>(t)]; };

    if ((mult(TaskKind::ChopTree) || mult(TaskKind::MakeBread)) && count(ObjectKind::Axe) == 0)
        fail(mult(TaskKind::ChopTree) ? TaskKind::ChopTree : TaskKind::MakeBread,
             "requires an Axe");
    if ((mult(TaskKind::BuildHouse) || mult(TaskKind::BreakRock)) &&
        count(ObjectKind::Hammer) == 0)
        fail(mult(TaskKind::BuildHouse) ? TaskKind::BuildHouse : TaskKind::BreakRock,
             "requires a Hammer");
    if (mult(TaskKind::ChopTree) > count(ObjectKind::Tree))
        fail(TaskKind::ChopTree, "needs more Trees than the map has");
    if (mult(TaskKind::MakeBread) > count(ObjectKind::Wheat))
        fail(TaskKind::MakeBread, "needs more Wheat than the map has");
    if (mult(TaskKind::BreakRock) > count(ObjectKind::Rock))
        fail(TaskKind::BreakRock, "needs more Rocks than the map has");
    if (mult(TaskKind::BuildHouse) > count(ObjectKind::Log) + mult(TaskKind::ChopTree))
        fail(TaskKind::BuildHouse, "needs more Logs than present or producible");
    if (mult(TaskKind::EatBread) > count(ObjectKind::Bread) + mult(TaskKind::MakeBread))
        fail(TaskKind::EatBread, "needs more Bread than present or producible");
}

struct Best {
    int len = INT_MAX;
    std::vector<Action> actions;
    std::vector<TaskKind> order;
};

// Appends the chosen task plus any units incidentally completed by the same
// strategy (a transformation fired while merely walking past). The chosen
// kind is listed first so the order reads as planned.
void record_completions(const GridState& before, const GridState& after, const Needs& n,
                        int chosen, std::vector<TaskKind>& order) {
    for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < craft::kTaskKindCount; ++k) {
            if ((pass == 0) != (k == chosen)) continue;
            const int gained = units_left(before, n, k) - units_left(after, n, k);
            for (int i = 0; i < gained; ++i) order.push_back(static_cast<TaskKind>(k));
        }
    }
}

// Exhaustive search over task orders and concrete recipe instantiations,
// simulating after every choice. Exact for small multisets on open grids.
void exact_search(const GridState& cur, const Needs& needs, std::vector<Action> acts,
                  std::vector<TaskKind> order, Best& best) {
    if (static_cast<int>(acts.size()) >= best.len) return;
    const int left = total_left(cur, needs);
    if (left == 0) {
        best = {static_cast<int>(acts.size()), std::move(acts), std::move(order)};
        return;
    }
    for (int k = 0; k < craft::kTaskKindCount; ++k) {
        if (units_left(cur, needs, k) == 0) continue;
        const TaskKind task = static_cast<TaskKind>(k);
        auto strategies = enumerate_strategies(cur, task);
        std::sort(strategies.begin(), strategies.end(), strategy_less);
        const auto ev = event_for(task);
        for (const Strategy& st : strategies) {
            if (static_cast<int>(acts.size()) + st.cost >= best.len) break;
            const auto sim = run_strategy(cur, st);
            if (!sim || sim->state.event_count(ev) <= cur.event_count(ev)) continue;
            std::vector<Action> acts2 = acts;
            acts2.insert(acts2.end(), sim->actions.begin(), sim->actions.end());
            std::vector<TaskKind> order2 = order;
            record_completions(cur, sim->state, needs, k, order2);
            exact_search(sim->state, needs, std::move(acts2), std::move(order2), best);
            // A single remaining unit ends the plan; the cheapest valid
            // strategy is final for this branch.
            if (left == 1) break;
        }
    }
}

// Cheapest valid strategy from `cur` for `task`, or nullopt if none applies.
std::optional<std::pair<Strategy, SimResult>> best_single(const GridState& cur, TaskKind task) {
    auto strategies = enumerate_strategies(cur, task);
    std::sort(strategies.begin(), strategies.end(), strategy_less);
    const auto ev = event_for(task);
    for (const Strategy& st : strategies) {
        auto sim = run_strategy(cur, st);
        if (sim && sim->state.event_count(ev) > cur.event_count(ev))
            return std::make_pair(st, std::move(*sim));
    }
    return std::nullopt;
}

// One dependency-respecting order, each task expanded greedily.
std::optional<Best> chain_order(const GridState& start, const Needs& needs,
                                std::span<const TaskKind> perm, int bound) {
    GridState cur = start;
    Best out;
    out.len = 0;
    for (const TaskKind task : perm) {
        if (units_left(cur, needs, static_cast<int>(task)) == 0) continue;  // already credited
        auto hit = best_single(cur, task);
        if (!hit) return std::nullopt;
        out.len += static_cast<int>(hit->second.actions.size());
        if (out.len >= bound) return std::nullopt;
        out.actions.insert(out.actions.end(), hit->second.actions.begin(),
                           hit->second.actions.end());
        record_completions(cur, hit->second.state, needs, static_cast<int>(task), out.order);
        cur = std::move(hit->second.state);
    }
    if (total_left(cur, needs) != 0) return std::nullopt;
    return out;
}

}  // namespace

std::vector<Action> bfs_actions(const GridState& state,
                                const std::function<bool(Position)>& goal,
                                const std::string& what) {
    const int w = state.width(), h = state.height();
    const Position start = state.agent();
    if (goal(start)) return {};
    static constexpr int kDRow[4] = {-1, 1, 0, 0};
    static constexpr int kDCol[4] = {0, 0, 1, -1};
    std::vector<int> dist(static_cast<size_t>(w) * h, -1);
    std::vector<int> parent(static_cast<size_t>(w) * h, -1);
    std::vector<Action> via(static_cast<size_t>(w) * h, Action::MoveNorth);
    std::deque<int> queue;
    const auto idx = [w](Position p) { return p.row * w + p.col; };
    dist[idx(start)] = 0;
    queue.push_back(idx(start));
    while (!queue.empty()) {
        const int ci = queue.front();
        queue.pop_front();
        const Position c{ci / w, ci % w};
        for (int d = 0; d < 4; ++d) {
            const Position nb{c.row + kDRow[d], c.col + kDCol[d]};
            if (!state.in_bounds(nb) || dist[idx(nb)] >= 0) continue;
            dist[idx(nb)] = dist[ci] + 1;
            parent[idx(nb)] = ci;
            via[idx(nb)] = static_cast<Action>(d);
            queue.push_back(idx(nb));
        }
    }
    int best = -1;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int i = r * w + c;
            if (dist[i] < 0 || !goal({r, c})) continue;
            if (best < 0 || dist[i] < dist[best]) best = i;
        }
    if (best < 0) throw PlanError("bfs_actions: unreachable goal: " + what);
    std::vector<Action> path;
    for (int i = best; i != idx(start); i = parent[i]) path.push_back(via[i]);
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<Action> plan_task(const GridState& state, TaskKind task) {
    const auto hit = best_single(state, task);
    if (!hit) {
        throw PlanError(std::string("plan_task(") + craft::to_string(task) +
                        "): " + missing_prereq(state, task));
    }
    return hit->second.actions;
}

SequencePlan plan_sequence(const GridState& state, std::vector<TaskKind> tasks,
                           int exact_threshold, int perm_threshold) {
    const Needs needs = make_needs(state, tasks);
    check_feasible(state, needs);

    Best best;
    if (tasks.empty()) {
        best = {0, {}, {}};
    } else if (static_cast<int>(tasks.size()) <= exact_threshold) {
        exact_search(state, needs, {}, {}, best);
        if (best.len == INT_MAX) {
            throw PlanError(std::string("plan_sequence: no executable order; ") +
                            missing_prereq(state, tasks.front()));
        }
    } else if (static_cast<int>(tasks.size()) <= perm_threshold) {
        std::vector<TaskKind> perm = tasks;
        std::sort(perm.begin(), perm.end());
        do {
            if (auto got = chain_order(state, needs, perm, best.len)) {
                if (got->len < best.len) best = std::move(*got);
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        if (best.len == INT_MAX)
            throw PlanError("plan_sequence: no dependency-respecting order is executable");
    } else {
        GridState cur = state;
        best.len = 0;
        while (total_left(cur, needs) > 0) {
            int pick = -1;
            std::optional<std::pair<Strategy, SimResult>> picked;
            for (int k = 0; k < craft::kTaskKindCount; ++k) {
                if (units_left(cur, needs, k) == 0) continue;
                auto hit = best_single(cur, static_cast<TaskKind>(k));
                if (hit && (!picked || hit->first.cost < picked->first.cost)) {
                    picked = std::move(hit);
                    pick = k;
                }
            }
            if (!picked) {
                for (int k = 0; k < craft::kTaskKindCount; ++k)
                    if (units_left(cur, needs, k) > 0)
                        throw PlanError(std::string("plan_sequence: blocked on ") +
                                        craft::to_string(static_cast<TaskKind>(k)));
                throw PlanError("plan_sequence: internal inconsistency");
            }
            best.len += static_cast<int>(picked->second.actions.size());
            best.actions.insert(best.actions.end(), picked->second.actions.begin(),
                                picked->second.actions.end());
            record_completions(cur, picked->second.state, needs, pick, best.order);
            cur = std::move(picked->second.state);
        }
    }

    SequencePlan plan;
    plan.order = std::move(best.order);
    plan.trajectory.states.push_back(state);
    for (const Action a : best.actions) {
        plan.trajectory.states.push_back(craft::step(plan.trajectory.states.back(), a).first);
        plan.trajectory.actions.push_back(a);
    }
    return plan;
}

bool validate(const Trajectory& traj, std::span<const TaskKind> tasks, std::string* why) {
    const auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (traj.states.empty()) return fail("empty state list");
    if (traj.states.size() != traj.actions.size() + 1)
        return fail("state/action length mismatch");
    for (size_t i = 0; i < traj.actions.size(); ++i) {
        const auto [next, report] = craft::step(traj.states[i], traj.actions[i]);
        if (!(next == traj.states[i + 1]))
            return fail("replay diverged at step " + std::to_string(i));
    }
    if (!craft::sequence_done(traj.states.back(), tasks))
        return fail("final state does not complete the task multiset");
    return true;
}

std::optional<int> oracle_shortest_length(const GridState& state,
                                          std::span<const TaskKind> tasks, int depth_cap) {
    const Needs needs = make_needs(state, tasks);
    const auto done = [&](const GridState& s) { return total_left(s, needs) == 0; };
    if (done(state)) return 0;

    const auto pack = [&](const GridState& s) {
        std::string key;
        key.reserve(static_cast<size_t>(s.width()) * s.height() + 8);
        for (int r = 0; r < s.height(); ++r)
            for (int c = 0; c < s.width(); ++c) {
                const auto k = s.at({r, c});
                key.push_back(k ? static_cast<char>(static_cast<int>(*k) + 1) : '\0');
            }
        key.push_back(static_cast<char>(s.agent().row));
        key.push_back(static_cast<char>(s.agent().col));
        key.push_back(s.carried() ? static_cast<char>(static_cast<int>(*s.carried()) + 1)
                                  : '\0');
        for (int k = 0; k < craft::kTaskKindCount; ++k)
            key.push_back(static_cast<char>(needs.mult[k] - units_left(s, needs, k)));
        return key;
    };

    std::unordered_set<std::string> visited;
    std::deque<std::pair<GridState, int>> queue;
    visited.insert(pack(state));
    queue.emplace_back(state, 0);
    while (!queue.empty()) {
        auto [cur, depth] = std::move(queue.front());
        queue.pop_front();
        if (depth >= depth_cap) continue;
        for (int a = 0; a < craft::kActionCount; ++a) {
            auto [next, report] = craft::step(cur, static_cast<Action>(a));
            if (report.blocked || report.noop) continue;  // state unchanged
            if (done(next)) return depth + 1;
            if (visited.insert(pack(next)).second) queue.emplace_back(std::move(next), depth + 1);
        }
    }
    return std::nullopt;
}

}  // namespace caseil::expert
