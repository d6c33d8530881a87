#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "signattack/tensor.hpp"

namespace signattack {

struct BoundingBox {
  int left = 0, top = 0, right = 0, bottom = 0;  // [left,right) x [top,bottom)
};

struct RawAnnotation {
  std::string image_path;
  std::string class_name;
  std::optional<BoundingBox> bounding_box;
};

enum class DatasetFormat { lisa_csv, gtsrb_dir, folder_per_class };
DatasetFormat parse_dataset_format(const std::string& name);
std::string dataset_format_name(DatasetFormat fmt);

struct LoadResult {
  std::vector<RawAnnotation> annotations;
  int skipped = 0;  // malformed rows, counted but not fatal
};

// Scans `root` according to the declared format. Annotations come back
// sorted lexicographically by path (row order preserved within a file), so
// repeated runs see identical ordering.
LoadResult load_dataset(const std::string& root, DatasetFormat format);

// Renames annotation classes through an alias table (e.g. foreign labels
// onto the training vocabulary). Unlisted names pass through unchanged.
void apply_alias(std::vector<RawAnnotation>& annotations,
                 const std::map<std::string, std::string>& alias);

struct LabeledImage {
  Tensor pixels;  // (1, side, side, 3), values in [0,1]
  int label = -1;
  std::string id;  // source path plus disambiguating suffix
};

struct ClassCatalog {
  std::vector<std::string> names;  // position = class index
  std::vector<int> counts;
  int min_count = 1;

  std::size_t size() const { return names.size(); }
  int index_of(const std::string& name) const;  // -1 when absent
};

// Classes with fewer than min_count annotations are dropped; survivors are
// indexed by descending count, ties broken alphabetically.
ClassCatalog build_catalog(const std::vector<RawAnnotation>& annotations, int min_count);

struct MaterializeResult {
  std::vector<LabeledImage> images;
  int skipped = 0;  // unreadable files or invalid boxes
};

// Crops each retained annotation to its box (when present), resamples to
// side x side with the shared bilinear kernel and scales into [0,1].
// Annotations whose class is not in the catalog are silently filtered.
MaterializeResult materialize(const std::vector<RawAnnotation>& annotations,
                              const ClassCatalog& catalog, int side);

struct DatasetSplit {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

// Per-class stratified shuffle driven only by `seed`. Every class needs at
// least two images so both sides stay non-empty.
DatasetSplit split(const std::vector<LabeledImage>& images, double train_fraction,
                   std::uint64_t seed);

struct DatasetCache {
  DatasetSplit split;
  ClassCatalog catalog;
  int side = 32;
};

void save_dataset_cache(const std::string& path, const DatasetCache& cache);
DatasetCache load_dataset_cache(const std::string& path);

}  // namespace signattack
