#pragma once

#include "wsseg/types.hpp"
#include "wsseg/vocabulary.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wsseg {

enum class DatasetMode {
  kWeak,  // every record needs a non-empty image-level label set
  kFull,  // every record needs a mask
  kAny,   // no requirement (evaluation, inference)
};

struct SampleRecord {
  std::string id;
  std::filesystem::path image_path;
  std::vector<int> labels;  // foreground class indices (1-based), sorted
  std::optional<std::filesystem::path> mask_path;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<SampleRecord> records;
  ClassVocabulary vocabulary;

  int num_classes() const { return vocabulary.num_classes(); }
  const SampleRecord& find(const std::string& id) const;

  bool operator==(const DatasetManifest& o) const {
    return root == o.root && split == o.split && records == o.records &&
           vocabulary.foreground_names == o.vocabulary.foreground_names &&
           vocabulary.background_names == o.vocabulary.background_names &&
           vocabulary.template_text == o.vocabulary.template_text;
  }
};

/// Reads a VOC-style root:
///   images/<id>.{png,jpg,jpeg}   image_labels.txt (`<id> <name>[,<name>...]`)
///   masks/<id>.png (optional)    splits/<split>.txt (one id per line)
///   class_names.txt (optional; one foreground name per line, overrides `fallback`)
/// Background prompt terms always come from `fallback`.
DatasetManifest load_dataset(const std::filesystem::path& root, const std::string& split, DatasetMode mode,
                             const ClassVocabulary& fallback = ClassVocabulary::pascal_voc());

struct SyntheticOptions {
  std::uint64_t seed = 0;
  int count = 8;
  int val_count = 0;  // the last `val_count` ids go to splits/val.txt, the rest to splits/train.txt
  int grid_h = 8;     // layout grid in patches
  int grid_w = 8;
  int patch_size = 8;
  int num_classes = 2;  // foreground classes, named after the first VOC classes
};

/// Writes patch-aligned rectangles (one per class, palette-coloured) on a black
/// background. Output is a loadable root; `splits/all.txt` lists every id.
DatasetManifest make_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options);

/// Foreground names used by make_synthetic_dataset for `num_classes` classes.
ClassVocabulary synthetic_vocabulary(int num_classes);

}  // namespace wsseg
