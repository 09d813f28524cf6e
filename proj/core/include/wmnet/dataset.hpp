#pragma once

#include "wmnet/synth.hpp"

namespace wmnet {

/// Resolved dataset recipe (the on-disk spec.txt).
struct DatasetSpec {
  MisalignmentSpec mis;
  int canvas = 64;
  int train_count = 800;
  int val_count = 200;
  uint64_t seed = 7;

  void validate() const {
    mis.validate();
    WMNET_CHECK(canvas >= 8, "dataset spec: canvas must be at least 8 px");
    WMNET_CHECK(train_count >= 1 && val_count >= 1, "dataset spec: empty split");
  }
};

DatasetSpec dataset_spec_from_file(const std::string& path);
std::string dataset_spec_text(const DatasetSpec& spec);

struct DataSplit {
  std::vector<Tensor<float>> rgb, ir;
  std::vector<GtSet> gt;
  std::vector<int> ids;
  size_t size() const { return rgb.size(); }
};

/// Writes train/ and val/ image folders plus annotations.jsonl and the
/// resolved spec.txt under out_dir.
void generate_dataset(const DatasetSpec& spec, const std::string& out_dir);

/// Loads a split previously written by generate_dataset.
DataSplit load_split(const std::string& dataset_dir, const std::string& split);

/// In-memory generation bypassing PNG round trips (used by tests; images are
/// identical up to 8-bit quantization).
DataSplit synthesize_split(const DatasetSpec& spec, const std::string& split);

}  // namespace wmnet
