#include "wsseg/dataset.hpp"

#include "wsseg/image.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace wsseg {
namespace fs = std::filesystem;

namespace {

std::string strip(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = strip(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::optional<fs::path> find_image(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    fs::path p = dir / (id + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

const SampleRecord& DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw DataError("no sample '" + id + "' in split '" + split + "'");
}

DatasetManifest load_dataset(const fs::path& root, const std::string& split, DatasetMode mode,
                             const ClassVocabulary& fallback) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");

  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.vocabulary = fallback;
  if (fs::exists(root / "class_names.txt")) m.vocabulary.foreground_names = read_lines(root / "class_names.txt");
  try {
    m.vocabulary.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(root.string() + ": " + e.what());
  }

  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < m.vocabulary.foreground_names.size(); ++i) {
    class_index[m.vocabulary.foreground_names[i]] = static_cast<int>(i) + 1;
  }

  std::map<std::string, std::vector<int>> tags;
  if (fs::exists(root / "image_labels.txt")) {
    for (const auto& line : read_lines(root / "image_labels.txt")) {
      const auto space = line.find_first_of(" \t");
      const std::string id = line.substr(0, space);
      std::vector<int> labels;
      if (space != std::string::npos) {
        std::istringstream names(line.substr(space + 1));
        std::string name;
        while (std::getline(names, name, ',')) {
          name = strip(name);
          if (name.empty()) continue;
          const auto it = class_index.find(name);
          if (it == class_index.end()) throw DataError("image_labels.txt: unknown class '" + name + "' for " + id);
          labels.push_back(it->second);
        }
      }
      std::sort(labels.begin(), labels.end());
      labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
      tags[id] = std::move(labels);
    }
  } else if (mode == DatasetMode::kWeak) {
    throw DataError("missing " + (root / "image_labels.txt").string());
  }

  const fs::path split_file = root / "splits" / (split + ".txt");
  if (!fs::exists(split_file)) throw DataError("missing split file " + split_file.string());
  const std::vector<std::string> ids = read_lines(split_file);
  if (ids.empty()) throw DataError("split file " + split_file.string() + " is empty");

  for (const auto& id : ids) {
    SampleRecord r;
    r.id = id;
    const auto image = find_image(root / "images", id);
    if (!image) throw DataError("image for id '" + id + "' not found under " + (root / "images").string());
    r.image_path = *image;
    if (const auto it = tags.find(id); it != tags.end()) r.labels = it->second;
    const fs::path mask = root / "masks" / (id + ".png");
    if (fs::exists(mask)) r.mask_path = mask;
    if (mode == DatasetMode::kWeak && r.labels.empty()) {
      throw DataError("id '" + id + "' has no image-level labels");
    }
    if (mode == DatasetMode::kFull && !r.mask_path) throw DataError("id '" + id + "' has no mask in " + mask.string());
    m.records.push_back(std::move(r));
  }
  return m;
}

ClassVocabulary synthetic_vocabulary(int num_classes) {
  ClassVocabulary v = ClassVocabulary::pascal_voc();
  if (num_classes < 1 || num_classes > static_cast<int>(v.foreground_names.size())) {
    throw std::invalid_argument("synthetic datasets support 1.." + std::to_string(v.foreground_names.size()) +
                                " classes");
  }
  v.foreground_names.resize(static_cast<std::size_t>(num_classes));
  return v;
}

DatasetManifest make_synthetic_dataset(const fs::path& root, const SyntheticOptions& o) {
  if (o.count < 1) throw std::invalid_argument("synthetic dataset needs count >= 1");
  if (o.val_count < 0 || o.val_count > o.count) throw std::invalid_argument("val_count must lie in [0, count]");
  if (o.grid_h < 1 || o.grid_w < 1 || o.patch_size < 1) throw std::invalid_argument("grid and patch must be positive");
  const ClassVocabulary vocab = synthetic_vocabulary(o.num_classes);

  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  fs::create_directories(root / "splits");

  std::mt19937_64 rng(o.seed);
  auto uniform = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  std::string labels_txt, train_txt, val_txt, all_txt;
  for (int n = 0; n < o.count; ++n) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "synth_%04d", n);
    const std::string id = id_buf;

    LabelMap grid(o.grid_h, o.grid_w, 0);
    std::vector<int> order(static_cast<std::size_t>(o.num_classes));
    for (int c = 0; c < o.num_classes; ++c) order[static_cast<std::size_t>(c)] = c + 1;
    std::shuffle(order.begin(), order.end(), rng);
    for (int c : order) {
      const int rh = uniform(std::max(1, o.grid_h / 4), std::max(1, o.grid_h / 2));
      const int rw = uniform(std::max(1, o.grid_w / 4), std::max(1, o.grid_w / 2));
      const int top = uniform(0, o.grid_h - rh);
      const int left = uniform(0, o.grid_w - rw);
      for (int y = top; y < top + rh; ++y)
        for (int x = left; x < left + rw; ++x) grid.at(y, x) = c;
    }

    const int h = o.grid_h * o.patch_size, w = o.grid_w * o.patch_size;
    LabelMap mask = resize_nearest(grid, h, w);
    Image image(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto color = palette_color(mask.at(y, x));
        for (int ch = 0; ch < 3; ++ch) image.at(ch, y, x) = color[static_cast<std::size_t>(ch)] / 255.0;
      }
    }
    save_image(image, root / "images" / (id + ".png"));
    save_label_image(mask, root / "masks" / (id + ".png"));

    std::vector<bool> present(static_cast<std::size_t>(o.num_classes) + 1, false);
    for (int v : grid.labels) present[static_cast<std::size_t>(v)] = true;
    std::string names;
    for (int c = 1; c <= o.num_classes; ++c) {
      if (!present[static_cast<std::size_t>(c)]) continue;
      if (!names.empty()) names += ',';
      names += vocab.class_name(c);
    }
    labels_txt += id + " " + names + "\n";
    all_txt += id + "\n";
    (n < o.count - o.val_count ? train_txt : val_txt) += id + "\n";
  }

  std::string class_names;
  for (const auto& name : vocab.foreground_names) class_names += name + "\n";
  write_text(root / "class_names.txt", class_names);
  write_text(root / "image_labels.txt", labels_txt);
  write_text(root / "splits" / "all.txt", all_txt);
  write_text(root / "splits" / "train.txt", train_txt);
  write_text(root / "splits" / "val.txt", val_txt);

  return load_dataset(root, "all", DatasetMode::kAny, vocab);
}

}  // namespace wsseg
