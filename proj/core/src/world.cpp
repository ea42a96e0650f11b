#include "vlaos/sim/world.hpp"

#include <algorithm>
#include <cmath>

#include "vlaos/common.hpp"
#include "vlaos/rng.hpp"

namespace vlaos::sim {

namespace {

constexpr float kGripperRing = 16;   // open gripper ring side
constexpr int kRingThick = 3;
constexpr float kGripperPad = 10;    // closed gripper pad side
constexpr uint8_t kBg = 236;
constexpr uint8_t kGripShade = 45;

float clampf(float v, float lo, float hi) { return std::min(hi, std::max(lo, v)); }

uint8_t pale(uint8_t c) { return static_cast<uint8_t>(c / 3 + 157); }

struct RectI {
  int x0, y0, x1, y1;  // half-open
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

RectI centered_rect(float cx, float cy, float side) {
  int h = static_cast<int>(side) / 2;
  int x = static_cast<int>(std::lround(cx));
  int y = static_cast<int>(std::lround(cy));
  return RectI{x - h, y - h, x + h, y + h};
}

}  // namespace

bool World::object_placed(const WorldState& state, const TaskSpec& task, int assignment) const {
  const auto& st = task.subtasks[assignment];
  const auto& z = task.zones[st.zone_index];
  float half = params().zone_px / 2;
  return std::fabs(state.object_x[st.object_index] - z.cx) <= half &&
         std::fabs(state.object_y[st.object_index] - z.cy) <= half;
}

bool World::gripper_over_object(const WorldState& state, int obj) const {
  float half = params().block_px / 2;
  return std::fabs(state.gripper_x - state.object_x[obj]) <= half &&
         std::fabs(state.gripper_y - state.object_y[obj]) <= half;
}

int World::subtask_index(const WorldState& state, const TaskSpec& task) const {
  // Smallest subtask whose prefix-conjunction predicate is unsatisfied ==
  // index of the first unplaced assignment.
  for (int i = 0; i < task.n_subtasks(); ++i)
    if (!object_placed(state, task, i)) return i;
  return task.n_subtasks();
}

bool World::subtask_complete(const WorldState& state, const TaskSpec& task, int subtask) const {
  for (int i = 0; i <= subtask; ++i)
    if (!object_placed(state, task, i)) return false;
  return true;
}

bool World::success(const WorldState& state, const TaskSpec& task) const {
  return subtask_complete(state, task, task.n_subtasks() - 1);
}

WorldState World::sample_entry_state(const TaskSpec& task, int entry, uint64_t seed) const {
  const WorldParams& wp = params();
  Pcg32 rng(seed ^ hash_str(task.id.c_str()) ^ (0x9e3779b97f4a7c15ULL * (entry + 1)));

  WorldState s;
  int n = static_cast<int>(task.objects.size());
  s.object_x.assign(n, 0);
  s.object_y.assign(n, 0);

  float zone_half = wp.zone_px / 2;
  float block_half = wp.block_px / 2;
  auto in_any_zone = [&](float x, float y) {
    for (const auto& z : task.zones) {
      if (std::fabs(x - z.cx) <= zone_half + block_half + 2 &&
          std::fabs(y - z.cy) <= zone_half + block_half + 2)
        return true;
    }
    return false;
  };

  for (int i = 0; i < n; ++i) {
    bool placed_start = false;
    // Assigned objects of subtasks < entry begin inside their zones.
    for (int a = 0; a < std::min(entry, task.n_subtasks()); ++a) {
      if (task.subtasks[a].object_index == i) {
        const auto& z = task.zones[task.subtasks[a].zone_index];
        s.object_x[i] = z.cx + static_cast<float>(rng.uniform(-4, 4));
        s.object_y[i] = z.cy + static_cast<float>(rng.uniform(-4, 4));
        placed_start = true;
        break;
      }
    }
    if (placed_start) continue;
    int tries = 0;
    for (;;) {
      if (++tries > 1000) throw RuntimeFailure("state sampler failed to place objects");
      float x = static_cast<float>(rng.uniform(wp.sample_lo, wp.sample_hi));
      float y = static_cast<float>(rng.uniform(wp.sample_lo, wp.sample_hi));
      if (in_any_zone(x, y)) continue;
      bool clash = false;
      for (int j = 0; j < i; ++j) {
        if (std::fabs(x - s.object_x[j]) <= 24 && std::fabs(y - s.object_y[j]) <= 24) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      s.object_x[i] = x;
      s.object_y[i] = y;
      break;
    }
  }

  s.gripper_x = static_cast<float>(rng.uniform(wp.gripper_lo, wp.gripper_hi));
  s.gripper_y = static_cast<float>(rng.uniform(wp.gripper_lo, wp.gripper_hi));
  s.gripper_closed = false;
  s.held_object = -1;
  s.step_count = 0;
  s.rng_state = rng.state();
  s.rng_inc = rng.inc();
  return s;
}

WorldState World::reset(uint64_t seed, const std::string& task_id) const {
  return inject_state(task_id, 0, seed);
}

WorldState World::inject_state(const std::string& task_id, int entry, uint64_t seed) const {
  const TaskSpec& task = reg_.task(task_id);  // throws on unknown id
  if (entry < 0 || entry >= task.n_subtasks())
    throw ConfigError("inject_state: subtask " + std::to_string(entry) + " out of range for " +
                      task_id);
  return sample_entry_state(task, entry, seed);
}

WorldState World::step(const WorldState& state, const TaskSpec& task,
                       const Action& action) const {
  const WorldParams& wp = params();
  WorldState s = state;
  float dx = clampf(action.dx, -1, 1) * wp.max_step_px;
  float dy = clampf(action.dy, -1, 1) * wp.max_step_px;
  float sigma = clampf(action.sigma, -1, 1);

  float limit = static_cast<float>(wp.render_px - 1);
  s.gripper_x = clampf(s.gripper_x + dx, 0, limit);
  s.gripper_y = clampf(s.gripper_y + dy, 0, limit);
  if (s.held_object >= 0) {
    s.object_x[s.held_object] = s.gripper_x;
    s.object_y[s.held_object] = s.gripper_y;
  }

  // Grasp toggles only on sign crossings of sigma against the latch, and a
  // close takes effect only while overlapping an object.
  if (sigma > 0 && !s.gripper_closed) {
    for (int i = 0; i < static_cast<int>(s.object_x.size()); ++i) {
      if (gripper_over_object(s, i)) {
        s.gripper_closed = true;
        s.held_object = i;
        break;
      }
    }
  } else if (sigma < 0 && s.gripper_closed) {
    s.gripper_closed = false;
    s.held_object = -1;
  }

  s.step_count = state.step_count + 1;
  return s;
}

Action World::expert_action(const WorldState& state, const TaskSpec& task) const {
  if (success(state, task)) throw RuntimeFailure("expert_action: task already complete");
  const WorldParams& wp = params();

  // The expert treats a held block as unfinished even if it already hovers
  // inside its zone, so it carries it to the zone center before releasing.
  int k = 0;
  while (k < task.n_subtasks() &&
         object_placed(state, task, k) &&
         state.held_object != task.subtasks[k].object_index)
    ++k;
  const auto& st = task.subtasks[k];

  auto toward = [&](float tx, float ty) {
    Action a;
    a.dx = clampf((tx - state.gripper_x) / wp.max_step_px, -1, 1);
    a.dy = clampf((ty - state.gripper_y) / wp.max_step_px, -1, 1);
    return a;
  };

  if (state.held_object == st.object_index) {
    const auto& z = task.zones[st.zone_index];
    if (std::fabs(state.gripper_x - z.cx) <= wp.release_tol &&
        std::fabs(state.gripper_y - z.cy) <= wp.release_tol) {
      return Action{0, 0, -1};  // release over the zone center
    }
    Action a = toward(z.cx, z.cy);
    a.sigma = 1;
    return a;
  }
  if (state.held_object >= 0) {
    return Action{0, 0, -1};  // holding the wrong block: drop it
  }
  if (gripper_over_object(state, st.object_index)) {
    return Action{0, 0, 1};  // grasp
  }
  Action a = toward(state.object_x[st.object_index], state.object_y[st.object_index]);
  a.sigma = -1;
  return a;
}

Image World::render(const WorldState& state, const TaskSpec& task, View view) const {
  const WorldParams& wp = params();
  Image img(wp.render_px, wp.render_px, kBg, kBg, kBg);

  for (const auto& z : task.zones) {
    RectI r = centered_rect(z.cx, z.cy, wp.zone_px);
    img.fill_rect(r.x0, r.y0, r.x1, r.y1, pale(z.color.r), pale(z.color.g), pale(z.color.b));
    img.draw_rect(r.x0, r.y0, r.x1, r.y1, 2, z.color.r, z.color.g, z.color.b);
  }

  for (int i = 0; i < static_cast<int>(task.objects.size()); ++i) {
    if (i == state.held_object) continue;
    RectI r = centered_rect(state.object_x[i], state.object_y[i], wp.block_px);
    const Rgb& c = task.objects[i].color;
    img.fill_rect(r.x0, r.y0, r.x1, r.y1, c.r, c.g, c.b);
  }
  if (state.held_object >= 0) {
    int i = state.held_object;
    RectI r = centered_rect(state.object_x[i], state.object_y[i], wp.block_px);
    const Rgb& c = task.objects[i].color;
    img.fill_rect(r.x0, r.y0, r.x1, r.y1, c.r, c.g, c.b);
  }

  if (state.gripper_closed) {
    RectI r = centered_rect(state.gripper_x, state.gripper_y, kGripperPad);
    img.fill_rect(r.x0, r.y0, r.x1, r.y1, kGripShade, kGripShade, kGripShade);
  } else {
    RectI r = centered_rect(state.gripper_x, state.gripper_y, kGripperRing);
    img.draw_rect(r.x0, r.y0, r.x1, r.y1, kRingThick, kGripShade, kGripShade, kGripShade);
  }

  if (view == View::eye_in_hand) {
    Image crop(wp.render_px, wp.render_px, kBg, kBg, kBg);
    int ox = static_cast<int>(std::lround(state.gripper_x)) - wp.render_px / 2;
    int oy = static_cast<int>(std::lround(state.gripper_y)) - wp.render_px / 2;
    for (int y = 0; y < wp.render_px; ++y) {
      int sy = y + oy;
      if (sy < 0 || sy >= wp.render_px) continue;
      for (int x = 0; x < wp.render_px; ++x) {
        int sx = x + ox;
        if (sx < 0 || sx >= wp.render_px) continue;
        const uint8_t* p = img.at(sx, sy);
        crop.set(x, y, p[0], p[1], p[2]);
      }
    }
    return crop;
  }
  return img;
}

std::vector<int16_t> World::segmentation(const WorldState& state, const TaskSpec& task) const {
  const WorldParams& wp = params();
  int n = wp.render_px;
  std::vector<int16_t> mask(static_cast<size_t>(n) * n, 0);

  auto paint = [&](RectI r, int16_t label) {
    int x0 = std::max(0, r.x0), y0 = std::max(0, r.y0);
    int x1 = std::min(n, r.x1), y1 = std::min(n, r.y1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) mask[static_cast<size_t>(y) * n + x] = label;
  };

  for (int i = 0; i < static_cast<int>(task.objects.size()); ++i) {
    if (i == state.held_object) continue;
    paint(centered_rect(state.object_x[i], state.object_y[i], wp.block_px),
          static_cast<int16_t>(i + 1));
  }
  if (state.held_object >= 0)
    paint(centered_rect(state.object_x[state.held_object], state.object_y[state.held_object],
                        wp.block_px),
          static_cast<int16_t>(state.held_object + 1));

  int16_t grip = static_cast<int16_t>(task.objects.size() + 1);
  if (state.gripper_closed) {
    paint(centered_rect(state.gripper_x, state.gripper_y, kGripperPad), grip);
  } else {
    RectI r = centered_rect(state.gripper_x, state.gripper_y, kGripperRing);
    RectI inner{r.x0 + kRingThick, r.y0 + kRingThick, r.x1 - kRingThick, r.y1 - kRingThick};
    int x0 = std::max(0, r.x0), y0 = std::max(0, r.y0);
    int x1 = std::min(n, r.x1), y1 = std::min(n, r.y1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (!inner.contains(x, y)) mask[static_cast<size_t>(y) * n + x] = grip;
  }
  return mask;
}

}  // namespace vlaos::sim
