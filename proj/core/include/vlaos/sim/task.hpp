#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vlaos::sim {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

struct ObjectSpec {
  std::string name;  // "red block"
  Rgb color;
};

struct ZoneSpec {
  std::string name;  // "red zone"
  Rgb color;
  float cx = 0, cy = 0;  // center, pixels
};

// One pick-place unit: bring `object` into `zone`. Subtask i of a task is
// complete when assignments 0..i are all placed (prefix conjunction), which
// keeps the subtask index nondecreasing along any progress-only rollout.
struct SubtaskSpec {
  std::string name;                 // "place the red block in the red zone"
  int object_index = -1;            // into TaskSpec::objects
  int zone_index = -1;              // into TaskSpec::zones
  std::string completion_predicate; // symbolic, e.g. "placed(red block,red zone)&..."
};

struct TaskSpec {
  std::string id;
  std::string instruction;
  std::string pool;  // "main" or "pretrain"
  std::vector<ObjectSpec> objects;  // assigned objects first, then distractors
  std::vector<ZoneSpec> zones;
  std::vector<SubtaskSpec> subtasks;
  std::string plan_text;  // canonical numbered plan, fixed per task
  std::string success_predicate;

  int n_subtasks() const { return static_cast<int>(subtasks.size()); }
  int max_horizon() const;  // 40 * n_subtasks
};

struct WorldParams {
  int render_px = 224;
  int cell_grid = 12;
  float block_px = 16;     // block side
  float zone_px = 36;      // zone side
  float max_step_px = 8;   // gripper pixels per unit action
  float sample_lo = 28;    // block sampling region, inclusive
  float sample_hi = 196;
  float gripper_lo = 56;   // gripper sampling region
  float gripper_hi = 168;
  float release_tol = 4;   // expert releases within this of the zone center
  int horizon_per_subtask = 40;
};

class Registry {
 public:
  // Parse the versioned JSON registry format.
  static Registry from_json_text(const std::string& text);
  static Registry from_file(const std::string& path);
  // The registry shipped in configs/tasks.json, compiled in so tests and
  // library users need no file path.
  static const Registry& builtin();
  static const char* builtin_json();

  const TaskSpec& task(const std::string& id) const;
  bool has_task(const std::string& id) const;
  std::vector<std::string> task_ids(const std::string& pool = "") const;
  const WorldParams& params() const { return params_; }
  int version() const { return version_; }

 private:
  int version_ = 0;
  WorldParams params_;
  std::vector<TaskSpec> tasks_;
};

}  // namespace vlaos::sim
