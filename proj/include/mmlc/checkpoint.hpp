#pragma once

#include <string>
#include <vector>

#include "mmlc/network.hpp"

namespace mmlc {

// On-disk ParamVector: magic "MMLCKPT1", u32 LE layout-JSON length, the
// layout JSON, u64 LE value count, then raw little-endian IEEE-754 doubles.
void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);

// Joins several named parameter vectors into one (entry names gain a
// "<prefix>." prefix), so one checkpoint file can hold alpha plus every
// task's weights.
ParamVector concat_params(const std::vector<std::pair<std::string, ParamVector>>& parts);

// Recovers one named part; `prefix` must match a concat_params name.
ParamVector extract_params(const ParamVector& combined, const std::string& prefix);

}  // namespace mmlc
