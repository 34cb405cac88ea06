#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "hiertask/expert.hpp"

namespace hiertask {

using nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const json& j);

json detection_to_json(const Detection& d);
Detection detection_from_json(const json& j);

json instance_to_json(const TrainInstance& x);
TrainInstance instance_from_json(const json& j);

/// Line-delimited dataset: a header record with the vocabulary hash and
/// config fingerprint, then one record per instance.
void write_dataset(const std::string& path, const std::vector<TrainInstance>& data, uint64_t vocabHash,
                   const std::string& fingerprint);
struct DatasetHeader {
  uint64_t vocabHash = 0;
  std::string fingerprint;
  size_t count = 0;
};
std::vector<TrainInstance> read_dataset(const std::string& path, DatasetHeader* header = nullptr);

/// Episode manifest: one record per demonstration (split, scene seed, task,
/// expert length). Demonstrations are regenerated on load and checked
/// against the stored expert length.
void write_manifest(const std::string& path, const std::vector<Episode>& episodes, const std::string& fingerprint);
std::vector<Episode> read_manifest(const std::string& path, std::string* fingerprint = nullptr, int jobs = 1);

}  // namespace hiertask
