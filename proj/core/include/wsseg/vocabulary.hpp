#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wsseg {

/// Foreground class universe, background text set and the prompt template.
///
/// Dataset class indices are 1-based for foreground classes (index i names
/// foreground_names[i - 1]); index 0 is background.
struct ClassVocabulary {
  std::vector<std::string> foreground_names;
  std::vector<std::string> background_names;
  std::string template_text = "a clear origami {}";

  int num_classes() const { return static_cast<int>(foreground_names.size()) + 1; }
  const std::string& class_name(int class_index) const;

  /// Throws std::invalid_argument when a list has an empty or duplicated name
  /// or the template lacks exactly one `{}` placeholder.
  void validate() const;

  static ClassVocabulary pascal_voc();
  static ClassVocabulary coco();
};

inline constexpr std::string_view kBackgroundChannelName = "__background__";

/// Substitutes `name` into the template's placeholder.
std::string make_prompt(const ClassVocabulary& vocabulary, std::string_view name);

/// Prompts for the present foreground classes (vocabulary order, duplicates
/// dropped) followed by every background term.
std::vector<std::string> build_prompts(const ClassVocabulary& vocabulary, const std::vector<int>& present_classes);

/// Present classes sorted into vocabulary order without duplicates; throws on unknown indices.
std::vector<int> canonical_present_classes(const ClassVocabulary& vocabulary, const std::vector<int>& present_classes);

}  // namespace wsseg
