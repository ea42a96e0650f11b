#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlaos/image.hpp"
#include "vlaos/sim/task.hpp"

namespace vlaos::sim {

// Normalized planar action. Components are clamped to [-1, 1] before
// stepping; sigma > 0 asks to close the gripper, sigma < 0 to open it.
struct Action {
  float dx = 0, dy = 0, sigma = 0;
};

struct WorldState {
  std::vector<float> object_x, object_y;  // one entry per task object
  float gripper_x = 0, gripper_y = 0;
  bool gripper_closed = false;
  int held_object = -1;  // index into task objects, -1 = none
  uint64_t rng_state = 0, rng_inc = 0;
  int step_count = 0;

  std::optional<std::string> held_object_id(const TaskSpec& task) const {
    if (held_object < 0) return std::nullopt;
    return task.objects[held_object].name;
  }
};

enum class View { third_person, eye_in_hand };

// Deterministic 2D tabletop. All member functions are pure with respect to
// the world: states are values, step/render never touch hidden state.
class World {
 public:
  explicit World(const Registry& registry) : reg_(registry) {}

  const Registry& registry() const { return reg_; }
  const WorldParams& params() const { return reg_.params(); }

  WorldState reset(uint64_t seed, const std::string& task_id) const;
  // Deterministic state at the start of subtask `entry` of `task_id`;
  // inject_state(task, 0, seed) is exactly reset(seed, task).
  WorldState inject_state(const std::string& task_id, int entry, uint64_t seed) const;

  WorldState step(const WorldState& state, const TaskSpec& task, const Action& action) const;

  Image render(const WorldState& state, const TaskSpec& task,
               View view = View::third_person) const;
  // Ground-truth segmentation: 0 = background, 1..n = object i+1, n+1 = gripper.
  std::vector<int16_t> segmentation(const WorldState& state, const TaskSpec& task) const;

  Action expert_action(const WorldState& state, const TaskSpec& task) const;
  int subtask_index(const WorldState& state, const TaskSpec& task) const;
  bool subtask_complete(const WorldState& state, const TaskSpec& task, int subtask) const;
  bool success(const WorldState& state, const TaskSpec& task) const;

  bool object_placed(const WorldState& state, const TaskSpec& task, int assignment) const;
  bool gripper_over_object(const WorldState& state, int obj) const;

 private:
  WorldState sample_entry_state(const TaskSpec& task, int entry, uint64_t seed) const;

  const Registry& reg_;
};

}  // namespace vlaos::sim
