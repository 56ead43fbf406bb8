#include "caseil/craftworld.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace caseil::craft {

namespace {

constexpr const char* kObjectNames[kObjectKindCount] = {
    "Tree", "Log", "House", "Rock", "Wheat", "Bread", "Axe", "Hammer"};
constexpr const char* kActionNames[kActionCount] = {
    "MoveNorth", "MoveSouth", "MoveEast", "MoveWest", "PickUp", "Drop"};
constexpr const char* kTaskNames[kTaskKindCount] = {
    "ChopTree", "BuildHouse", "MakeBread", "EatBread", "BreakRock"};
constexpr const char* kEventNames[kTaskEventCount] = {
    "logs_made", "houses_built", "bread_made", "bread_eaten", "rocks_broken"};

constexpr char kObjectGlyphs[kObjectKindCount] = {'T', 'L', 'H', 'R', 'W', 'B', 'A', 'M'};

struct Rule {
    ObjectKind tool;
    ObjectKind terrain;
    std::optional<ObjectKind> result;
    TaskEvent event;
};

constexpr Rule kRules[] = {
    {ObjectKind::Axe, ObjectKind::Tree, ObjectKind::Log, TaskEvent::LogsMade},
    {ObjectKind::Hammer, ObjectKind::Log, ObjectKind::House, TaskEvent::HousesBuilt},
    {ObjectKind::Axe, ObjectKind::Wheat, ObjectKind::Bread, TaskEvent::BreadMade},
    {ObjectKind::Hammer, ObjectKind::Rock, std::nullopt, TaskEvent::RocksBroken},
};

std::array<int, kTaskKindCount> task_counts(std::span<const TaskKind> tasks) {
    std::array<int, kTaskKindCount> counts{};
    for (const TaskKind t : tasks) ++counts[static_cast<size_t>(t)];
    return counts;
}

}  // namespace

bool is_carryable(ObjectKind kind) {
    switch (kind) {
        case ObjectKind::Wheat:
        case ObjectKind::Bread:
        case ObjectKind::Axe:
        case ObjectKind::Hammer:
            return true;
        default:
            return false;
    }
}

const char* to_string(ObjectKind kind) { return kObjectNames[static_cast<size_t>(kind)]; }
const char* to_string(Action action) { return kActionNames[static_cast<size_t>(action)]; }
const char* to_string(TaskKind task) { return kTaskNames[static_cast<size_t>(task)]; }
const char* to_string(TaskEvent event) { return kEventNames[static_cast<size_t>(event)]; }

std::optional<TaskKind> task_from_string(std::string_view name) {
    for (int i = 0; i < kTaskKindCount; ++i) {
        if (name == kTaskNames[i]) return static_cast<TaskKind>(i);
    }
    return std::nullopt;
}

TaskEvent event_for(TaskKind task) {
    switch (task) {
        case TaskKind::ChopTree: return TaskEvent::LogsMade;
        case TaskKind::BuildHouse: return TaskEvent::HousesBuilt;
        case TaskKind::MakeBread: return TaskEvent::BreadMade;
        case TaskKind::EatBread: return TaskEvent::BreadEaten;
        case TaskKind::BreakRock: return TaskEvent::RocksBroken;
    }
    throw std::logic_error("unknown task kind");
}

GridState new_world(int width, int height,
                    const std::vector<std::pair<Position, ObjectKind>>& placements,
                    Position agent_pos) {
    if (width < 1 || height < 1) throw WorldError("world dimensions must be positive");
    GridState s;
    s.width_ = width;
    s.height_ = height;
    s.cells_.assign(static_cast<size_t>(width) * height, 0);
    if (!s.in_bounds(agent_pos)) {
        throw WorldError("agent position (" + std::to_string(agent_pos.row) + "," +
                         std::to_string(agent_pos.col) + ") out of bounds");
    }
    s.agent_ = agent_pos;
    for (const auto& [pos, kind] : placements) {
        if (!s.in_bounds(pos)) {
            throw WorldError("placement (" + std::to_string(pos.row) + "," +
                             std::to_string(pos.col) + ") out of bounds");
        }
        uint8_t& cell = s.cells_[s.cell_index(pos)];
        if (cell != 0) {
            throw WorldError("duplicate placement at (" + std::to_string(pos.row) + "," +
                             std::to_string(pos.col) + ")");
        }
        cell = static_cast<uint8_t>(kind) + 1;
    }
    return s;
}

std::pair<GridState, StepReport> step(const GridState& state, Action action) {
    GridState next = state;
    StepReport report;
    switch (action) {
        case Action::MoveNorth:
        case Action::MoveSouth:
        case Action::MoveEast:
        case Action::MoveWest: {
            static constexpr int kDRow[4] = {-1, 1, 0, 0};
            static constexpr int kDCol[4] = {0, 0, 1, -1};
            const int d = static_cast<int>(action);
            const Position target{state.agent_.row + kDRow[d], state.agent_.col + kDCol[d]};
            if (!state.in_bounds(target)) {
                report.blocked = true;
                break;
            }
            next.agent_ = target;
            if (next.carried_) {
                const auto occupant = next.at(target);
                if (occupant) {
                    for (const Rule& rule : kRules) {
                        if (rule.tool == *next.carried_ && rule.terrain == *occupant) {
                            next.cells_[next.cell_index(target)] =
                                rule.result ? static_cast<uint8_t>(*rule.result) + 1 : 0;
                            ++next.events_[static_cast<size_t>(rule.event)];
                            report.transformed = Transformation{*occupant, rule.result, target};
                            break;
                        }
                    }
                }
            }
            break;
        }
        case Action::PickUp: {
            const auto occupant = state.at(state.agent_);
            if (state.carried_ || !occupant || !is_carryable(*occupant)) {
                report.noop = true;
                break;
            }
            next.cells_[next.cell_index(state.agent_)] = 0;
            if (*occupant == ObjectKind::Bread) {
                ++next.events_[static_cast<size_t>(TaskEvent::BreadEaten)];
                report.ate_bread = true;
            } else {
                next.carried_ = *occupant;
                report.picked_up = true;
            }
            break;
        }
        case Action::Drop: {
            if (!state.carried_ || state.at(state.agent_)) {
                report.noop = true;
                break;
            }
            next.cells_[next.cell_index(state.agent_)] = static_cast<uint8_t>(*state.carried_) + 1;
            next.carried_.reset();
            report.dropped = true;
            break;
        }
    }
    return {std::move(next), report};
}

bool task_done(const GridState& state, TaskKind task) {
    return state.event_count(event_for(task)) >= 1;
}

bool sequence_done(const GridState& state, std::span<const TaskKind> tasks) {
    const auto counts = task_counts(tasks);
    for (int i = 0; i < kTaskKindCount; ++i) {
        const auto task = static_cast<TaskKind>(i);
        if (state.event_count(event_for(task)) < static_cast<uint32_t>(counts[i])) return false;
    }
    return true;
}

int tasks_completed(const GridState& state, std::span<const TaskKind> tasks) {
    const auto counts = task_counts(tasks);
    int done = 0;
    for (int i = 0; i < kTaskKindCount; ++i) {
        const auto task = static_cast<TaskKind>(i);
        done += std::min<int>(counts[i], state.event_count(event_for(task)));
    }
    return done;
}

size_t feature_length(int width, int height) {
    return static_cast<size_t>(width) * height * (kObjectKindCount + 1) + kCarryableCount +
           kTaskEventCount;
}

void featurize_into(const GridState& state, double* out) {
    const size_t n = feature_length(state.width(), state.height());
    std::fill(out, out + n, 0.0);
    const int cells = state.width() * state.height();
    for (int c = 0; c < cells; ++c) {
        const Position pos{c / state.width(), c % state.width()};
        const auto kind = state.at(pos);
        if (kind) out[c * (kObjectKindCount + 1) + static_cast<int>(*kind)] = 1.0;
    }
    out[state.cell_index(state.agent()) * (kObjectKindCount + 1) + kObjectKindCount] = 1.0;
    double* tail = out + static_cast<size_t>(cells) * (kObjectKindCount + 1);
    if (state.carried()) {
        static constexpr ObjectKind kCarryOrder[kCarryableCount] = {
            ObjectKind::Wheat, ObjectKind::Bread, ObjectKind::Axe, ObjectKind::Hammer};
        for (int i = 0; i < kCarryableCount; ++i) {
            if (*state.carried() == kCarryOrder[i]) tail[i] = 1.0;
        }
    }
    tail += kCarryableCount;
    for (int i = 0; i < kTaskEventCount; ++i) {
        tail[i] = state.event_count(static_cast<TaskEvent>(i)) / 8.0;
    }
}

std::vector<double> featurize(const GridState& state) {
    std::vector<double> out(feature_length(state.width(), state.height()));
    featurize_into(state, out.data());
    return out;
}

std::string render_ascii(const GridState& state) {
    std::string out;
    for (int r = 0; r < state.height(); ++r) {
        if (r > 0) out += '\n';
        for (int c = 0; c < state.width(); ++c) {
            const Position pos{r, c};
            const auto kind = state.at(pos);
            if (pos == state.agent()) {
                if (kind) {
                    out += static_cast<char>(
                        std::tolower(kObjectGlyphs[static_cast<size_t>(*kind)]));
                } else {
                    out += '@';
                }
            } else if (kind) {
                out += kObjectGlyphs[static_cast<size_t>(*kind)];
            } else {
                out += "\xC2\xB7";  // U+00B7 middle dot
            }
        }
    }
    if (state.carried()) {
        out += "\ncarried: ";
        out += to_string(*state.carried());
    }
    bool any_event = false;
    for (int i = 0; i < kTaskEventCount; ++i) {
        any_event = any_event || state.event_count(static_cast<TaskEvent>(i)) > 0;
    }
    if (any_event) {
        out += "\nevents:";
        for (int i = 0; i < kTaskEventCount; ++i) {
            out += ' ';
            out += kEventNames[i];
            out += '=';
            out += std::to_string(state.event_count(static_cast<TaskEvent>(i)));
        }
    }
    return out;
}

GridState parse_ascii(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::string line;
        std::istringstream in(text);
        while (std::getline(in, line)) lines.push_back(line);
    }
    GridState s;
    std::optional<Position> agent;
    size_t row = 0;
    for (; row < lines.size(); ++row) {
        const std::string& line = lines[row];
        if (line.rfind("carried:", 0) == 0 || line.rfind("events:", 0) == 0) break;
        std::vector<uint8_t> cells;
        for (size_t i = 0; i < line.size();) {
            const unsigned char byte = line[i];
            if (byte == 0xC2 && i + 1 < line.size() &&
                static_cast<unsigned char>(line[i + 1]) == 0xB7) {
                cells.push_back(0);
                i += 2;
                continue;
            }
            if (byte == '@') {
                agent = Position{static_cast<int>(row), static_cast<int>(cells.size())};
                cells.push_back(0);
                ++i;
                continue;
            }
            bool matched = false;
            for (int k = 0; k < kObjectKindCount; ++k) {
                if (byte == kObjectGlyphs[k]) {
                    cells.push_back(static_cast<uint8_t>(k + 1));
                    matched = true;
                } else if (byte == std::tolower(kObjectGlyphs[k])) {
                    agent = Position{static_cast<int>(row), static_cast<int>(cells.size())};
                    cells.push_back(static_cast<uint8_t>(k + 1));
                    matched = true;
                }
                if (matched) break;
            }
            if (!matched) {
                throw WorldError("parse_ascii: unknown glyph '" + std::string(1, line[i]) +
                                 "' at line " + std::to_string(row + 1));
            }
            ++i;
        }
        if (s.width_ == 0) {
            s.width_ = static_cast<int>(cells.size());
        } else if (static_cast<int>(cells.size()) != s.width_) {
            throw WorldError("parse_ascii: ragged grid at line " + std::to_string(row + 1));
        }
        s.cells_.insert(s.cells_.end(), cells.begin(), cells.end());
    }
    s.height_ = static_cast<int>(row);
    if (s.width_ == 0 || s.height_ == 0) throw WorldError("parse_ascii: empty grid");
    if (!agent) throw WorldError("parse_ascii: no agent glyph");
    s.agent_ = *agent;
    for (; row < lines.size(); ++row) {
        const std::string& line = lines[row];
        if (line.rfind("carried: ", 0) == 0) {
            const std::string name = line.substr(9);
            bool found = false;
            for (int k = 0; k < kObjectKindCount; ++k) {
                if (name == kObjectNames[k]) {
                    s.carried_ = static_cast<ObjectKind>(k);
                    found = true;
                    break;
                }
            }
            if (!found) throw WorldError("parse_ascii: unknown carried object '" + name + "'");
        } else if (line.rfind("events:", 0) == 0) {
            std::istringstream in(line.substr(7));
            std::string token;
            while (in >> token) {
                const auto eq = token.find('=');
                if (eq == std::string::npos) throw WorldError("parse_ascii: bad event token");
                const std::string name = token.substr(0, eq);
                bool found = false;
                for (int k = 0; k < kTaskEventCount; ++k) {
                    if (name == kEventNames[k]) {
                        s.events_[k] = static_cast<uint32_t>(std::stoul(token.substr(eq + 1)));
                        found = true;
                        break;
                    }
                }
                if (!found) throw WorldError("parse_ascii: unknown event '" + name + "'");
            }
        } else if (!line.empty()) {
            throw WorldError("parse_ascii: unexpected trailer line " + std::to_string(row + 1));
        }
    }
    std::string why;
    if (!check_invariants(s, &why)) throw WorldError("parse_ascii: " + why);
    return s;
}

bool check_invariants(const GridState& state, std::string* why) {
    const auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (state.width() < 1 || state.height() < 1) return fail("non-positive dimensions");
    if (!state.in_bounds(state.agent())) return fail("agent out of bounds");
    if (state.carried() && !is_carryable(*state.carried()))
        return fail("carried object is not carryable");
    return true;
}

}  // namespace caseil::craft
