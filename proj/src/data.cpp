#include "signattack/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "signattack/errors.hpp"
#include "signattack/image.hpp"
#include "signattack/rng.hpp"
#include "signattack/serialize.hpp"

namespace fs = std::filesystem;

namespace signattack {

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "lisa_csv") return DatasetFormat::lisa_csv;
  if (name == "gtsrb_dir") return DatasetFormat::gtsrb_dir;
  if (name == "folder_per_class") return DatasetFormat::folder_per_class;
  throw ConfigError("unknown dataset format '" + name + "'");
}

std::string dataset_format_name(DatasetFormat fmt) {
  switch (fmt) {
    case DatasetFormat::lisa_csv: return "lisa_csv";
    case DatasetFormat::gtsrb_dir: return "gtsrb_dir";
    case DatasetFormat::folder_per_class: return "folder_per_class";
  }
  return "?";
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" || ext == ".bmp";
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string normalize_column(std::string s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '"')
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

char detect_delimiter(const std::string& header) {
  return std::count(header.begin(), header.end(), ';') >= std::count(header.begin(), header.end(), ',')
             ? ';'
             : ',';
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

// column index by any of several accepted spellings, -1 when absent
int find_column(const std::vector<std::string>& header, const std::vector<std::string>& wanted) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string norm = normalize_column(header[i]);
    for (const auto& w : wanted)
      if (norm == w) return static_cast<int>(i);
  }
  return -1;
}

bool parse_int(const std::string& s, int& out) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);  // some annotation exports write "12.0"
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) return false;
    out = static_cast<int>(std::lround(v));
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void load_annotation_csv(const fs::path& csv_path, const fs::path& image_base, LoadResult& result) {
  std::ifstream f(csv_path);
  if (!f) throw ConfigError("cannot open annotation csv '" + csv_path.string() + "'");
  std::string header_line;
  if (!std::getline(f, header_line)) return;  // empty csv, nothing to add
  char delim = detect_delimiter(header_line);
  auto header = split_line(header_line, delim);

  int col_file = find_column(header, {"filename"});
  int col_tag = find_column(header, {"annotationtag", "tag", "classid", "class"});
  int col_l = find_column(header, {"upperleftx", "upperleftcornerx", "roix1"});
  int col_t = find_column(header, {"upperlefty", "upperleftcornery", "roiy1"});
  int col_r = find_column(header, {"lowerrightx", "lowerrightcornerx", "roix2"});
  int col_b = find_column(header, {"lowerrighty", "lowerrightcornery", "roiy2"});
  if (col_file < 0 || col_tag < 0)
    throw ConfigError("annotation csv '" + csv_path.string() + "' lacks Filename/AnnotationTag columns");
  bool has_box = col_l >= 0 && col_t >= 0 && col_r >= 0 && col_b >= 0;

  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line, delim);
    int needed = std::max({col_file, col_tag, has_box ? std::max({col_l, col_t, col_r, col_b}) : 0});
    if (static_cast<int>(fields.size()) <= needed) {
      ++result.skipped;
      continue;
    }
    RawAnnotation ann;
    ann.image_path = (image_base / fields[col_file]).lexically_normal().string();
    ann.class_name = fields[col_tag];
    if (ann.class_name.empty() || fields[col_file].empty()) {
      ++result.skipped;
      continue;
    }
    if (has_box) {
      BoundingBox box;
      if (!parse_int(fields[col_l], box.left) || !parse_int(fields[col_t], box.top) ||
          !parse_int(fields[col_r], box.right) || !parse_int(fields[col_b], box.bottom)) {
        ++result.skipped;
        continue;
      }
      if (box.right <= box.left || box.bottom <= box.top) {
        ++result.skipped;
        continue;
      }
      ann.bounding_box = box;
    }
    result.annotations.push_back(std::move(ann));
  }
}

}  // namespace

LoadResult load_dataset(const std::string& root, DatasetFormat format) {
  fs::path rp(root);
  if (!fs::exists(rp))
    throw ConfigError("dataset root '" + root + "' does not exist");

  LoadResult result;
  switch (format) {
    case DatasetFormat::lisa_csv: {
      fs::path csv;
      if (fs::is_regular_file(rp)) {
        csv = rp;
      } else {
        if (fs::exists(rp / "allAnnotations.csv")) {
          csv = rp / "allAnnotations.csv";
        } else {
          for (const auto& e : sorted_entries(rp, false))
            if (e.extension() == ".csv") {
              csv = e;
              break;
            }
        }
        if (csv.empty()) throw ConfigError("no annotation csv found under '" + root + "'");
      }
      load_annotation_csv(csv, csv.parent_path(), result);
      break;
    }
    case DatasetFormat::gtsrb_dir: {
      if (!fs::is_directory(rp)) throw ConfigError("gtsrb root '" + root + "' is not a directory");
      for (const auto& cls_dir : sorted_entries(rp, true)) {
        std::string cls = cls_dir.filename().string();
        // per-class ROI csv is optional
        std::map<std::string, BoundingBox> boxes;
        for (const auto& e : sorted_entries(cls_dir, false)) {
          if (e.extension() != ".csv") continue;
          LoadResult local;
          load_annotation_csv(e, cls_dir, local);
          result.skipped += local.skipped;
          for (auto& a : local.annotations)
            if (a.bounding_box) boxes[a.image_path] = *a.bounding_box;
        }
        for (const auto& e : sorted_entries(cls_dir, false)) {
          if (!is_image_file(e)) continue;
          RawAnnotation ann;
          ann.image_path = e.string();
          ann.class_name = cls;
          auto it = boxes.find(e.string());
          if (it != boxes.end()) ann.bounding_box = it->second;
          result.annotations.push_back(std::move(ann));
        }
      }
      break;
    }
    case DatasetFormat::folder_per_class: {
      if (!fs::is_directory(rp))
        throw ConfigError("folder_per_class root '" + root + "' is not a directory");
      for (const auto& cls_dir : sorted_entries(rp, true)) {
        std::string cls = cls_dir.filename().string();
        for (const auto& e : sorted_entries(cls_dir, false)) {
          if (!is_image_file(e)) continue;
          result.annotations.push_back({e.string(), cls, std::nullopt});
        }
      }
      break;
    }
  }

  std::stable_sort(result.annotations.begin(), result.annotations.end(),
                   [](const RawAnnotation& a, const RawAnnotation& b) { return a.image_path < b.image_path; });
  return result;
}

void apply_alias(std::vector<RawAnnotation>& annotations,
                 const std::map<std::string, std::string>& alias) {
  if (alias.empty()) return;
  for (auto& a : annotations) {
    auto it = alias.find(a.class_name);
    if (it != alias.end()) a.class_name = it->second;
  }
}

int ClassCatalog::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

ClassCatalog build_catalog(const std::vector<RawAnnotation>& annotations, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& a : annotations) ++counts[a.class_name];

  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [name, count] : counts)
    if (count >= min_count) kept.emplace_back(name, count);
  if (kept.empty())
    throw DataError("no class has at least min_count=" + std::to_string(min_count) + " annotations");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  ClassCatalog catalog;
  catalog.min_count = min_count;
  for (const auto& [name, count] : kept) {
    catalog.names.push_back(name);
    catalog.counts.push_back(count);
  }
  return catalog;
}

MaterializeResult materialize(const std::vector<RawAnnotation>& annotations,
                              const ClassCatalog& catalog, int side) {
  if (side < 8) throw ConfigError("side must be >= 8, got " + std::to_string(side));
  MaterializeResult result;

  // decode cache: annotations are path-sorted, so frames with several signs
  // decode once
  std::string cached_path;
  Tensor cached;

  int row = 0;
  for (const auto& ann : annotations) {
    ++row;
    int label = catalog.index_of(ann.class_name);
    if (label < 0) continue;  // class filtered out, not a warning
    try {
      if (ann.image_path != cached_path) {
        cached = decode_image(ann.image_path);
        cached_path = ann.image_path;
      }
    } catch (const IoError&) {
      ++result.skipped;
      continue;
    }
    Tensor region;
    if (ann.bounding_box) {
      const BoundingBox& b = *ann.bounding_box;
      if (b.left < 0 || b.top < 0 || b.right > cached.w() || b.bottom > cached.h() ||
          b.right <= b.left || b.bottom <= b.top) {
        ++result.skipped;
        continue;
      }
      region = crop(cached, b.left, b.top, b.right, b.bottom);
    } else {
      region = cached;
    }
    LabeledImage img;
    img.pixels = bilinear_resize(region, side, side);
    img.label = label;
    img.id = ann.image_path + "#" + std::to_string(row);
    result.images.push_back(std::move(img));
  }
  return result;
}

DatasetSplit split(const std::vector<LabeledImage>& images, double train_fraction,
                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0,1)");

  int num_classes = 0;
  for (const auto& img : images) num_classes = std::max(num_classes, img.label + 1);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < images.size(); ++i) by_class[images[i].label].push_back(i);

  DatasetSplit out;
  out.seed = seed;
  out.train_fraction = train_fraction;
  Rng rng(seed);
  for (int cls = 0; cls < num_classes; ++cls) {
    auto& members = by_class[cls];
    if (members.empty()) continue;
    if (members.size() < 2)
      throw DataError("class index " + std::to_string(cls) + " has fewer than 2 images; cannot stratify");
    rng.shuffle(members);
    long n = static_cast<long>(members.size());
    long n_train = std::lround(train_fraction * static_cast<double>(n));
    n_train = std::clamp(n_train, 1L, n - 1);
    for (long i = 0; i < n; ++i) {
      const LabeledImage& img = images[members[i]];
      (i < n_train ? out.train : out.test).push_back(img);
    }
  }
  return out;
}

void save_dataset_cache(const std::string& path, const DatasetCache& cache) {
  Artifact a("dataset_cache");
  auto& hdr = a.header();
  hdr["side"] = cache.side;
  hdr["seed"] = cache.split.seed;
  hdr["train_fraction"] = cache.split.train_fraction;
  hdr["class_names"] = cache.catalog.names;
  hdr["class_counts"] = cache.catalog.counts;
  hdr["min_count"] = cache.catalog.min_count;

  auto pack = [&](const std::vector<LabeledImage>& imgs, const std::string& prefix) {
    int n = static_cast<int>(imgs.size());
    int side = cache.side;
    Tensor pixels(n, side, side, 3);
    Tensor labels(n, 1, 1, 1);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      pixels.set_slice(i, imgs[i].pixels);
      labels.at(i, 0, 0, 0) = imgs[i].label;
      ids.push_back(imgs[i].id);
    }
    a.put(prefix + "_pixels", pixels);
    a.put(prefix + "_labels", labels);
    hdr[prefix + "_ids"] = ids;
  };
  pack(cache.split.train, "train");
  pack(cache.split.test, "test");
  a.save(path);
}

DatasetCache load_dataset_cache(const std::string& path) {
  Artifact a = Artifact::load(path, "dataset_cache", "ingest");
  const auto& hdr = a.header();
  DatasetCache cache;
  cache.side = hdr.at("side").get<int>();
  cache.split.seed = hdr.at("seed").get<std::uint64_t>();
  cache.split.train_fraction = hdr.at("train_fraction").get<double>();
  cache.catalog.names = hdr.at("class_names").get<std::vector<std::string>>();
  cache.catalog.counts = hdr.at("class_counts").get<std::vector<int>>();
  cache.catalog.min_count = hdr.at("min_count").get<int>();

  auto unpack = [&](const std::string& prefix, std::vector<LabeledImage>& out) {
    const Tensor& pixels = a.get(prefix + "_pixels");
    const Tensor& labels = a.get(prefix + "_labels");
    auto ids = hdr.at(prefix + "_ids").get<std::vector<std::string>>();
    for (int i = 0; i < pixels.n(); ++i) {
      LabeledImage img;
      img.pixels = pixels.slice(i);
      img.label = static_cast<int>(labels.at(i, 0, 0, 0));
      img.id = ids[i];
      out.push_back(std::move(img));
    }
  };
  unpack("train", cache.split.train);
  unpack("test", cache.split.test);
  return cache;
}

}  // namespace signattack
