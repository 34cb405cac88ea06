#include "hiertask/io.hpp"

#include <fstream>

namespace hiertask {

namespace {

Obj obj_or_throw(const json& j) {
  const auto o = obj_from_name(j.get<std::string>());
  if (!o) throw FormatError("unknown object class " + j.get<std::string>());
  return *o;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

json task_to_json(const TaskSpec& t) {
  return {{"type", task_type_name(t.type)},
          {"target", obj_name(t.target)},
          {"receptacle", obj_name(t.receptacle)},
          {"aux", obj_name(t.aux)},
          {"sliced", t.sliced},
          {"goal", t.goalDirective}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  const auto type = task_type_from_name(j.at("type").get<std::string>());
  if (!type) throw FormatError("unknown task type");
  t.type = *type;
  t.target = obj_or_throw(j.at("target"));
  t.receptacle = obj_or_throw(j.at("receptacle"));
  t.aux = obj_or_throw(j.at("aux"));
  t.sliced = j.at("sliced");
  t.goalDirective = j.at("goal");
  return t;
}

json detection_to_json(const Detection& d) {
  json j = {{"label", obj_name(d.classLabel)},
            {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
            {"conf", d.confidence}};
  j["ref"] = d.groundTruthRef ? *d.groundTruthRef : -1;
  return j;
}

Detection detection_from_json(const json& j) {
  Detection d;
  d.classLabel = obj_or_throw(j.at("label"));
  const auto& b = j.at("box");
  d.box = {b.at(0), b.at(1), b.at(2), b.at(3)};
  d.confidence = j.at("conf");
  const int ref = j.at("ref");
  if (ref >= 0) d.groundTruthRef = ref;
  return d;
}

json instance_to_json(const TrainInstance& x) {
  json j;
  j["sp"] = subproblem_name(x.subProblem);
  j["split"] = split_name(x.split);
  j["episode"] = x.episode;
  j["goal"] = x.goal;
  if (x.subProblem != SubProblem::SubGoalPlanning) {
    j["instruction"] = x.instruction;
    j["current"] = to_string(x.current);
  }
  json hist = json::array();
  for (const auto& s : x.sgHistory) hist.push_back(to_string(s));
  for (NavType a : x.navHistory) hist.push_back(nav_name(a));
  for (const auto& a : x.manipHistory) hist.push_back(to_string(a));
  j["history"] = hist;
  json obs = json::array();
  for (const auto& d : x.obs.detections) obs.push_back(detection_to_json(d));
  j["obs"] = obs;
  j["rot"] = static_cast<int>(x.rot);
  j["horizon"] = x.horizon;
  j["labels"] = {x.sgType, x.sgArg, x.actType, x.actArg, x.mask};
  return j;
}

TrainInstance instance_from_json(const json& j) {
  TrainInstance x;
  const std::string sp = j.at("sp");
  bool found = false;
  for (int i = 0; i < kNumSubProblems; ++i)
    if (subproblem_name(static_cast<SubProblem>(i)) == sp) {
      x.subProblem = static_cast<SubProblem>(i);
      found = true;
    }
  if (!found) throw FormatError("unknown sub-problem " + sp);
  const auto split = split_from_name(j.at("split").get<std::string>());
  if (!split) throw FormatError("unknown split");
  x.split = *split;
  x.episode = j.at("episode");
  x.goal = j.at("goal");
  if (x.subProblem != SubProblem::SubGoalPlanning) {
    x.instruction = j.at("instruction");
    x.current = parse_subgoal(j.at("current").get<std::string>());
  }
  for (const auto& h : j.at("history")) {
    const std::string s = h;
    switch (x.subProblem) {
      case SubProblem::SubGoalPlanning:
        x.sgHistory.push_back(parse_subgoal(s));
        break;
      case SubProblem::Navigation: {
        const auto a = nav_from_name(s);
        if (!a) throw FormatError("unknown navigation action " + s);
        x.navHistory.push_back(*a);
        break;
      }
      case SubProblem::Manipulation:
        x.manipHistory.push_back(parse_manip(s));
        break;
    }
  }
  for (const auto& d : j.at("obs")) x.obs.detections.push_back(detection_from_json(d));
  const int rot = j.at("rot");
  if (rot < 0 || rot > 3) throw FormatError("rotation out of range");
  x.rot = static_cast<Rot>(rot);
  x.horizon = j.at("horizon");
  const auto& l = j.at("labels");
  x.sgType = l.at(0);
  x.sgArg = l.at(1);
  x.actType = l.at(2);
  x.actArg = l.at(3);
  x.mask = l.at(4);
  return x;
}

void write_dataset(const std::string& path, const std::vector<TrainInstance>& data, uint64_t vocabHash,
                   const std::string& fingerprint) {
  auto out = open_out(path);
  json h = {{"record", "header"}, {"vocab_hash", hex64(vocabHash)}, {"fingerprint", fingerprint}, {"count", data.size()}};
  out << h.dump() << '\n';
  for (const auto& x : data) out << instance_to_json(x).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<TrainInstance> read_dataset(const std::string& path, DatasetHeader* header) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset file " + path);
  DatasetHeader h;
  std::vector<TrainInstance> out;
  try {
    const json j = json::parse(line);
    if (j.at("record") != "header") throw FormatError("dataset lacks a header record");
    h.vocabHash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
    h.fingerprint = j.at("fingerprint");
    h.count = j.at("count");
    while (std::getline(in, line))
      if (!line.empty()) out.push_back(instance_from_json(json::parse(line)));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (out.size() != h.count) throw FormatError(path + ": record count does not match the header");
  if (header) *header = h;
  return out;
}

void write_manifest(const std::string& path, const std::vector<Episode>& episodes, const std::string& fingerprint) {
  auto out = open_out(path);
  out << json{{"record", "header"}, {"fingerprint", fingerprint}, {"count", episodes.size()}}.dump() << '\n';
  for (const auto& e : episodes) {
    json j = {{"index", e.index},
              {"split", split_name(e.split)},
              {"layout", e.demo.sceneSeed.layout},
              {"placement", e.demo.sceneSeed.placement},
              {"task", task_to_json(e.demo.task)},
              {"sub_goals", e.demo.subGoals.size()},
              {"expert_length", e.demo.expertLength}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Episode> read_manifest(const std::string& path, std::string* fingerprint, int jobs) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest " + path);
  std::vector<json> records;
  try {
    const json h = json::parse(line);
    if (h.at("record") != "header") throw FormatError("manifest lacks a header record");
    if (fingerprint) *fingerprint = h.at("fingerprint");
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(json::parse(line));
    if (records.size() != h.at("count").get<size_t>()) throw FormatError("manifest record count mismatch");
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  std::vector<Episode> out(records.size());
  parallel_for(static_cast<int>(records.size()), jobs, [&](int i) {
    const json& j = records[static_cast<size_t>(i)];
    Episode& e = out[static_cast<size_t>(i)];
    e.index = j.at("index");
    const auto split = split_from_name(j.at("split").get<std::string>());
    if (!split) throw FormatError("unknown split in manifest");
    e.split = *split;
    const SceneSeed seed{j.at("layout").get<uint32_t>(), j.at("placement").get<uint32_t>()};
    e.demo = generate_demo(seed, task_from_json(j.at("task")));
    if (e.demo.expertLength != j.at("expert_length").get<int>() ||
        e.demo.task.goalDirective != j.at("task").at("goal").get<std::string>())
      throw FormatError("manifest episode " + std::to_string(e.index) + " does not regenerate");
  });
  return out;
}

}  // namespace hiertask
