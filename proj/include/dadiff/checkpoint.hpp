#pragma once

#include <string>

#include "dadiff/pipeline.hpp"

namespace dadiff {

/// Single-file parameter archive: a magic line, the RunConfig JSON document,
/// then every parameter array keyed by module path (float64, little-endian).
void save_checkpoint(const std::string& path, DadiffModel& model);

/// Rebuild the model from the embedded config, then restore all parameters.
DadiffModel load_checkpoint(const std::string& path);

} // namespace dadiff
