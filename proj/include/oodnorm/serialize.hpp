#pragma once

#include <string>

#include "oodnorm/flow.hpp"

namespace oodnorm {

/// Structured-text encoding of a model; decimal literals carry enough digits to
/// reproduce every double bit-exactly.
std::string model_to_text(const FlowModel& model);
FlowModel model_from_text(const std::string& text);

void save_model(const FlowModel& model, const std::string& path);
FlowModel load_model(const std::string& path);

} // namespace oodnorm
