#pragma once

#include <string>

namespace wmnet {

/// Renders training-loss and validation-mAP curves from a metrics JSONL log
/// into a PNG figure.
void plot_metrics(const std::string& jsonl_path, const std::string& out_png);

}  // namespace wmnet
