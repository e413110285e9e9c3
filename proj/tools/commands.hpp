#pragma once

#include "spdegp/config.hpp"

namespace spdegp::cli {

// Each command returns the process exit code; errors propagate as exceptions
// and are mapped to exit codes by main().
int cmd_simulate(const KeyValueConfig& kv);
int cmd_interpolate(const KeyValueConfig& kv);
int cmd_ensemble(const KeyValueConfig& kv);
int cmd_fit(const KeyValueConfig& kv);
int cmd_score(const KeyValueConfig& kv);
int cmd_oracle_check(const KeyValueConfig& kv);

} // namespace spdegp::cli
