#include "wsseg/vocabulary.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace wsseg {
namespace {

void check_names(const std::vector<std::string>& names, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw std::invalid_argument(std::string("empty ") + what + " class name");
    if (!seen.insert(n).second) throw std::invalid_argument(std::string("duplicate ") + what + " class name '" + n + "'");
  }
}

const std::vector<std::string> kVocBackground = {
    "ground", "land",  "grass",   "tree",  "building", "wall",     "sky",      "lake",  "water",
    "river",  "sea",   "railway", "railroad", "keyboard", "helmet", "cloud", "house", "mountain",
    "ocean",  "road",  "rock",    "street", "valley",  "bridge",   "sign"};

}  // namespace

const std::string& ClassVocabulary::class_name(int class_index) const {
  if (class_index == 0) {
    static const std::string background(kBackgroundChannelName);
    return background;
  }
  if (class_index < 0 || class_index > static_cast<int>(foreground_names.size())) {
    throw std::invalid_argument("unknown class index " + std::to_string(class_index));
  }
  return foreground_names[static_cast<std::size_t>(class_index - 1)];
}

void ClassVocabulary::validate() const {
  check_names(foreground_names, "foreground");
  check_names(background_names, "background");
  const auto first = template_text.find("{}");
  if (first == std::string::npos || template_text.find("{}", first + 2) != std::string::npos) {
    throw std::invalid_argument("prompt template must contain exactly one {} placeholder");
  }
}

ClassVocabulary ClassVocabulary::pascal_voc() {
  ClassVocabulary v;
  v.foreground_names = {"aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",   "car",
                        "cat",       "chair",   "cow",   "diningtable", "dog",    "horse", "motorbike",
                        "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};
  v.background_names = kVocBackground;
  return v;
}

ClassVocabulary ClassVocabulary::coco() {
  ClassVocabulary v;
  v.foreground_names = {
      "person",        "bicycle",      "car",           "motorcycle",    "airplane",     "bus",
      "train",         "truck",        "boat",          "traffic light", "fire hydrant", "stop sign",
      "parking meter", "bench",        "bird",          "cat",           "dog",          "horse",
      "sheep",         "cow",          "elephant",      "bear",          "zebra",        "giraffe",
      "backpack",      "umbrella",     "handbag",       "tie",           "suitcase",     "frisbee",
      "skis",          "snowboard",    "sports ball",   "kite",          "baseball bat", "baseball glove",
      "skateboard",    "surfboard",    "tennis racket", "bottle",        "wine glass",   "cup",
      "fork",          "knife",        "spoon",         "bowl",          "banana",       "apple",
      "sandwich",      "orange",       "broccoli",      "carrot",        "hot dog",      "pizza",
      "donut",         "cake",         "chair",         "couch",         "potted plant", "bed",
      "dining table",  "toilet",       "tv",            "laptop",        "mouse",        "remote",
      "keyboard",      "cell phone",   "microwave",     "oven",          "toaster",      "sink",
      "refrigerator",  "book",         "clock",         "vase",          "scissors",     "teddy bear",
      "hair drier",    "toothbrush"};
  for (const auto& n : kVocBackground) {
    if (n != "sign" && n != "keyboard") v.background_names.push_back(n);
  }
  return v;
}

std::string make_prompt(const ClassVocabulary& vocabulary, std::string_view name) {
  std::string out = vocabulary.template_text;
  const auto pos = out.find("{}");
  if (pos == std::string::npos) throw std::invalid_argument("prompt template has no {} placeholder");
  out.replace(pos, 2, name);
  return out;
}

std::vector<int> canonical_present_classes(const ClassVocabulary& vocabulary, const std::vector<int>& present_classes) {
  std::vector<int> present = present_classes;
  for (int c : present) {
    if (c < 1 || c > static_cast<int>(vocabulary.foreground_names.size())) {
      throw std::invalid_argument("unknown foreground class index " + std::to_string(c));
    }
  }
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  return present;
}

std::vector<std::string> build_prompts(const ClassVocabulary& vocabulary, const std::vector<int>& present_classes) {
  std::vector<std::string> prompts;
  for (int c : canonical_present_classes(vocabulary, present_classes)) {
    prompts.push_back(make_prompt(vocabulary, vocabulary.foreground_names[static_cast<std::size_t>(c - 1)]));
  }
  for (const auto& bg : vocabulary.background_names) prompts.push_back(make_prompt(vocabulary, bg));
  return prompts;
}

}  // namespace wsseg
