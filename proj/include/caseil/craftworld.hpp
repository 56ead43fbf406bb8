#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace caseil::craft {

// Deterministic, fully observable 2D grid world. States are immutable values:
// `step` returns a fresh state, never mutates its input.

enum class ObjectKind : uint8_t { Tree, Log, House, Rock, Wheat, Bread, Axe, Hammer };
inline constexpr int kObjectKindCount = 8;

// Action indices 0..5 are a fixed contract; policy logits are laid out in this
// order. North decreases the row, West decreases the column.
enum class Action : uint8_t { MoveNorth, MoveSouth, MoveEast, MoveWest, PickUp, Drop };
inline constexpr int kActionCount = 6;

enum class TaskKind : uint8_t { ChopTree, BuildHouse, MakeBread, EatBread, BreakRock };
inline constexpr int kTaskKindCount = 5;

enum class TaskEvent : uint8_t { LogsMade, HousesBuilt, BreadMade, BreadEaten, RocksBroken };
inline constexpr int kTaskEventCount = 5;

// Wheat, Bread, Axe and Hammer can be picked up; Tree, Log, House and Rock are
// fixed terrain.
bool is_carryable(ObjectKind kind);
inline constexpr int kCarryableCount = 4;

const char* to_string(ObjectKind kind);
const char* to_string(Action action);
const char* to_string(TaskKind task);
const char* to_string(TaskEvent event);
std::optional<TaskKind> task_from_string(std::string_view name);

// Counter that certifies completion of each task kind.
TaskEvent event_for(TaskKind task);

struct Position {
    int row = 0;
    int col = 0;
    bool operator==(const Position&) const = default;
};

struct Transformation {
    ObjectKind consumed;                   // object removed from the cell
    std::optional<ObjectKind> produced;    // replacement, if any
    Position at;
};

// Everything that fired during one step. Ill-posed actions are no-ops flagged
// here, never errors: rollouts of arbitrary policies must not crash.
struct StepReport {
    bool blocked = false;    // move clamped at a boundary
    bool noop = false;       // pickup/drop that could not apply
    bool picked_up = false;
    bool dropped = false;
    bool ate_bread = false;  // bread pickup consumes it, hands stay empty
    std::optional<Transformation> transformed;
};

struct WorldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class GridState {
public:
    GridState() = default;

    int width() const { return width_; }
    int height() const { return height_; }
    Position agent() const { return agent_; }
    std::optional<ObjectKind> carried() const { return carried_; }

    bool in_bounds(Position p) const {
        return p.row >= 0 && p.row < height_ && p.col >= 0 && p.col < width_;
    }
    std::optional<ObjectKind> at(Position p) const {
        const uint8_t c = cells_[cell_index(p)];
        if (c == 0) return std::nullopt;
        return static_cast<ObjectKind>(c - 1);
    }
    uint32_t event_count(TaskEvent e) const { return events_[static_cast<size_t>(e)]; }
    const std::array<uint32_t, kTaskEventCount>& events() const { return events_; }

    size_t cell_index(Position p) const { return static_cast<size_t>(p.row) * width_ + p.col; }

    bool operator==(const GridState&) const = default;

    friend GridState new_world(int width, int height,
                               const std::vector<std::pair<Position, ObjectKind>>& placements,
                               Position agent_pos);
    friend std::pair<GridState, StepReport> step(const GridState& state, Action action);
    friend GridState parse_ascii(const std::string& text);

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<uint8_t> cells_;  // 0 = empty, otherwise ObjectKind + 1
    Position agent_{};
    std::optional<ObjectKind> carried_;
    std::array<uint32_t, kTaskEventCount> events_{};
};

// Throws WorldError on out-of-bounds or duplicate placements.
GridState new_world(int width, int height,
                    const std::vector<std::pair<Position, ObjectKind>>& placements,
                    Position agent_pos);

// Pure transition. Transformations fire when the agent enters a cell whose
// object matches the carried tool: (Axe,Tree)->Log, (Hammer,Log)->House,
// (Axe,Wheat)->Bread, (Hammer,Rock)->empty. The tool is retained. Picking up
// Bread consumes it and bumps the bread_eaten counter.
std::pair<GridState, StepReport> step(const GridState& state, Action action);

bool task_done(const GridState& state, TaskKind task);

// Multiset semantics: each kind's event counter must reach its multiplicity.
bool sequence_done(const GridState& state, std::span<const TaskKind> tasks);

// Number of task instances currently satisfied, counting multiplicity.
int tasks_completed(const GridState& state, std::span<const TaskKind> tasks);

// Symbolic observation. Layout (documented contract):
//   H*W cells in row-major order, 9 channels each: the 8 object kinds in enum
//   order, then an agent-presence channel;
//   4 carried one-hot channels (carryable kinds in enum order: Wheat, Bread,
//   Axe, Hammer);
//   5 event counters in enum order, divided by 8.
size_t feature_length(int width, int height);
void featurize_into(const GridState& state, double* out);
std::vector<double> featurize(const GridState& state);

// One glyph per cell. Empty "·", Tree T, Log L, House H, Rock R, Wheat W,
// Bread B, Axe A, Hammer M. The agent renders as "@" on an empty cell and as
// the lowercase object glyph otherwise. When the state carries an object or
// has nonzero counters, trailer lines "carried: <kind>" and
// "events: logs_made=.." follow the grid so that parse_ascii(render_ascii(s))
// reproduces s exactly.
std::string render_ascii(const GridState& state);
GridState parse_ascii(const std::string& text);

// Checks the documented representation invariants; returns false and fills
// `why` on violation. Used by generators and tests.
bool check_invariants(const GridState& state, std::string* why = nullptr);

}  // namespace caseil::craft
