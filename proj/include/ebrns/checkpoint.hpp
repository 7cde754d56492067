#pragma once

// Versioned JSON persistence of a gate bank. Round trips are bit-exact:
// doubles serialize as shortest round-trippable decimals.

#include <string>

#include "ebrns/gates.hpp"

namespace ebrns {

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  GateBank bank;
  std::string model_id;  // "rw1d", "cv2d-linear", "cv2d-radar"
  int n_z = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

// In-memory (de)serialization backing the file roundtrip; exposed for tests.
std::string checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace ebrns
