#include "vlaos/sim/task.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "vlaos/common.hpp"

namespace vlaos::sim {

using nlohmann::json;

int TaskSpec::max_horizon() const {
  return 40 * n_subtasks();
}

namespace {

Rgb parse_color(const json& j) {
  return Rgb{static_cast<uint8_t>(j.at(0).get<int>()), static_cast<uint8_t>(j.at(1).get<int>()),
             static_cast<uint8_t>(j.at(2).get<int>())};
}

std::string make_plan_text(const TaskSpec& t) {
  std::ostringstream os;
  int n = 1;
  for (const auto& st : t.subtasks) {
    os << n++ << ". Pick up the " << t.objects[st.object_index].name << ". ";
    os << n++ << ". Place it in the " << t.zones[st.zone_index].name << ". ";
  }
  os << n << ". Stop.";
  return os.str();
}

}  // namespace

Registry Registry::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("task registry: invalid JSON: ") + e.what());
  }

  Registry reg;
  reg.version_ = root.value("version", 0);
  if (reg.version_ != 1) throw ConfigError("task registry: unsupported version");

  const auto& w = root.at("world");
  reg.params_.render_px = w.value("render_px", 224);
  reg.params_.cell_grid = w.value("cell_grid", 12);
  reg.params_.block_px = w.value("block_px", 16.0f);
  reg.params_.zone_px = w.value("zone_px", 36.0f);
  reg.params_.max_step_px = w.value("max_step_px", 8.0f);

  std::map<std::string, ZoneSpec> zone_table;
  for (const auto& z : root.at("zones")) {
    ZoneSpec zs;
    zs.name = z.at("name").get<std::string>();
    zs.color = parse_color(z.at("color"));
    zs.cx = z.at("center").at(0).get<float>();
    zs.cy = z.at("center").at(1).get<float>();
    zone_table[zs.name] = zs;
  }
  std::map<std::string, ObjectSpec> obj_table;
  for (const auto& o : root.at("objects")) {
    ObjectSpec os;
    os.name = o.at("name").get<std::string>();
    os.color = parse_color(o.at("color"));
    obj_table[os.name] = os;
  }

  for (const auto& jt : root.at("tasks")) {
    TaskSpec t;
    t.id = jt.at("id").get<std::string>();
    t.instruction = jt.at("instruction").get<std::string>();
    t.pool = jt.value("pool", "main");

    for (const auto& name : jt.at("objects")) {
      auto it = obj_table.find(name.get<std::string>());
      if (it == obj_table.end())
        throw ConfigError("task " + t.id + ": unknown object " + name.get<std::string>());
      t.objects.push_back(it->second);
    }

    std::map<std::string, int> zone_index;
    for (const auto& a : jt.at("assignments")) {
      std::string obj_name = a.at(0).get<std::string>();
      std::string zone_name = a.at(1).get<std::string>();
      int oi = -1;
      for (size_t i = 0; i < t.objects.size(); ++i)
        if (t.objects[i].name == obj_name) oi = static_cast<int>(i);
      if (oi < 0) throw ConfigError("task " + t.id + ": assignment object not listed");
      if (!zone_index.count(zone_name)) {
        auto it = zone_table.find(zone_name);
        if (it == zone_table.end())
          throw ConfigError("task " + t.id + ": unknown zone " + zone_name);
        zone_index[zone_name] = static_cast<int>(t.zones.size());
        t.zones.push_back(it->second);
      }
      SubtaskSpec st;
      st.object_index = oi;
      st.zone_index = zone_index[zone_name];
      st.name = "place the " + obj_name + " in the " + zone_name;
      t.subtasks.push_back(st);
    }
    if (t.subtasks.empty()) throw ConfigError("task " + t.id + ": no assignments");

    // Predicate of subtask i is the prefix conjunction of placements 0..i,
    // so the subtask index never decreases along progress-only rollouts and
    // the final predicate is the task success predicate.
    std::string conj;
    for (size_t i = 0; i < t.subtasks.size(); ++i) {
      auto& st = t.subtasks[i];
      if (i > 0) conj += "&";
      conj += "placed(" + t.objects[st.object_index].name + "," +
              t.zones[st.zone_index].name + ")";
      st.completion_predicate = conj;
    }
    t.success_predicate = t.subtasks.back().completion_predicate;
    t.plan_text = make_plan_text(t);
    reg.tasks_.push_back(std::move(t));
  }
  return reg;
}

Registry Registry::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("task registry: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

const TaskSpec& Registry::task(const std::string& id) const {
  for (const auto& t : tasks_)
    if (t.id == id) return t;
  throw ConfigError("unknown task id: " + id);
}

bool Registry::has_task(const std::string& id) const {
  for (const auto& t : tasks_)
    if (t.id == id) return true;
  return false;
}

std::vector<std::string> Registry::task_ids(const std::string& pool) const {
  std::vector<std::string> out;
  for (const auto& t : tasks_)
    if (pool.empty() || t.pool == pool) out.push_back(t.id);
  return out;
}

const char* Registry::builtin_json() {
  // Kept byte-identical with configs/tasks.json (enforced by a test).
  static const char* kJson = R"JSON({
  "version": 1,
  "world": {
    "render_px": 224,
    "cell_grid": 12,
    "block_px": 16,
    "zone_px": 36,
    "max_step_px": 8
  },
  "zones": [
    {"name": "red zone", "color": [220, 30, 30], "center": [56, 56]},
    {"name": "blue zone", "color": [30, 60, 220], "center": [168, 56]},
    {"name": "green zone", "color": [30, 160, 40], "center": [56, 168]},
    {"name": "yellow zone", "color": [230, 190, 30], "center": [168, 168]}
  ],
  "objects": [
    {"name": "red block", "color": [220, 30, 30]},
    {"name": "blue block", "color": [30, 60, 220]},
    {"name": "green block", "color": [30, 160, 40]},
    {"name": "yellow block", "color": [230, 190, 30]},
    {"name": "purple block", "color": [150, 40, 180]},
    {"name": "orange block", "color": [240, 130, 30]}
  ],
  "tasks": [
    {
      "id": "sort_pair",
      "pool": "main",
      "instruction": "put the red block in the red zone and the blue block in the blue zone",
      "objects": ["red block", "blue block", "green block"],
      "assignments": [["red block", "red zone"], ["blue block", "blue zone"]]
    },
    {
      "id": "stage_three",
      "pool": "main",
      "instruction": "place the red green and yellow blocks in their matching zones",
      "objects": ["red block", "green block", "yellow block", "purple block"],
      "assignments": [["red block", "red zone"], ["green block", "green zone"], ["yellow block", "yellow zone"]]
    },
    {
      "id": "line_four",
      "pool": "main",
      "instruction": "sort all four colored blocks into their matching zones",
      "objects": ["red block", "blue block", "green block", "yellow block", "orange block"],
      "assignments": [["red block", "red zone"], ["blue block", "blue zone"], ["green block", "green zone"], ["yellow block", "yellow zone"]]
    },
    {
      "id": "swap_pair",
      "pool": "pretrain",
      "instruction": "put the red block in the blue zone and the blue block in the red zone",
      "objects": ["red block", "blue block", "green block"],
      "assignments": [["red block", "blue zone"], ["blue block", "red zone"]]
    },
    {
      "id": "cross_pair",
      "pool": "pretrain",
      "instruction": "put the green block in the yellow zone and the yellow block in the green zone",
      "objects": ["green block", "yellow block", "blue block"],
      "assignments": [["green block", "yellow zone"], ["yellow block", "green zone"]]
    },
    {
      "id": "gather_three",
      "pool": "pretrain",
      "instruction": "move the blue purple and orange blocks to the green red and yellow zones",
      "objects": ["blue block", "purple block", "orange block", "red block"],
      "assignments": [["blue block", "green zone"], ["purple block", "red zone"], ["orange block", "yellow zone"]]
    }
  ]
}
)JSON";
  return kJson;
}

const Registry& Registry::builtin() {
  static Registry reg = from_json_text(builtin_json());
  return reg;
}

}  // namespace vlaos::sim
