#include "wsseg/vocabulary.hpp"

#include <gtest/gtest.h>

#include <stdexcept>

namespace wsseg {
namespace {

TEST(Vocabulary, VocHasTwentyForegroundAndTwentyFiveBackgroundNames) {
  const ClassVocabulary v = ClassVocabulary::pascal_voc();
  EXPECT_EQ(v.foreground_names.size(), 20u);
  EXPECT_EQ(v.background_names.size(), 25u);
  EXPECT_EQ(v.num_classes(), 21);
  EXPECT_NO_THROW(v.validate());
  EXPECT_EQ(v.class_name(0), kBackgroundChannelName);
  EXPECT_EQ(v.class_name(12), "dog");
}

TEST(Vocabulary, CocoHasEightyForegroundNames) {
  const ClassVocabulary v = ClassVocabulary::coco();
  EXPECT_EQ(v.foreground_names.size(), 80u);
  EXPECT_NO_THROW(v.validate());
}

TEST(Vocabulary, PromptTemplate) {
  EXPECT_EQ(make_prompt(ClassVocabulary::pascal_voc(), "dog"), "a clear origami dog");
}

TEST(Vocabulary, EmptyPresentGivesOnlyBackgroundPrompts) {
  const ClassVocabulary v = ClassVocabulary::pascal_voc();
  const auto prompts = build_prompts(v, {});
  ASSERT_EQ(prompts.size(), 25u);
  EXPECT_EQ(prompts.front(), make_prompt(v, v.background_names.front()));
}

TEST(Vocabulary, ForegroundsFirstInVocabularyOrder) {
  const ClassVocabulary v = ClassVocabulary::pascal_voc();
  const auto prompts = build_prompts(v, {12, 1});  // dog, aeroplane
  ASSERT_EQ(prompts.size(), 27u);
  EXPECT_EQ(prompts[0], "a clear origami aeroplane");
  EXPECT_EQ(prompts[1], "a clear origami dog");
}

TEST(Vocabulary, UnknownClassRejected) {
  const ClassVocabulary v = ClassVocabulary::pascal_voc();
  EXPECT_THROW(build_prompts(v, {21}), std::invalid_argument);
  EXPECT_THROW(build_prompts(v, {0}), std::invalid_argument);
  EXPECT_THROW(v.class_name(-1), std::invalid_argument);
}

TEST(Vocabulary, ValidateRejectsDuplicatesAndBadTemplate) {
  ClassVocabulary v;
  v.foreground_names = {"a", "a"};
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.foreground_names = {"a", ""};
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.foreground_names = {"a"};
  v.template_text = "no placeholder";
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.template_text = "{} and {}";
  EXPECT_THROW(v.validate(), std::invalid_argument);
}

TEST(Vocabulary, CanonicalPresentSortsAndDeduplicates) {
  EXPECT_EQ(canonical_present_classes(ClassVocabulary::pascal_voc(), {5, 2, 5}), (std::vector<int>{2, 5}));
}

}  // namespace
}  // namespace wsseg
