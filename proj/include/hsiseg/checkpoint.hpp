#pragma once

#include <string>
#include <vector>

#include "hsiseg/network.hpp"

namespace hsiseg {

// A network snapshot plus the minimal metadata needed to use it standalone:
// the label space (category id per output channel), the protocol stage that
// produced it and the master seed of the run.  Serialized as a key/value
// archive; the embedded config JSON makes the file self-describing.
struct Checkpoint {
  Network net;
  std::vector<int> label_space;
  int stage_index = 0;
  uint64_t seed = 0;
};

inline constexpr int64_t kCheckpointFormatVersion = 1;

void save_checkpoint(const Checkpoint& ck, const std::string& path);

// Loads and fully validates a checkpoint.  Throws ArchiveError naming the
// offending key on any missing, unexpected or misshapen entry.
Checkpoint load_checkpoint(const std::string& path);

std::string network_config_to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const std::string& text);

}  // namespace hsiseg
