#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "qaprompt/error.hpp"
#include "qaprompt/prompting.hpp"
#include "support/fixtures.hpp"

namespace qap {
namespace {

using testing::fixtures_dir;
using testing::read_file;

const std::string kArticle =
    "The city council approved a new budget on Monday. Funding for parks rises by ten percent.";

IclExample example(std::size_t k) {
  const std::vector<std::string> all{"School opening dates", "Opening moves back one week",
                                     "Local schools and repair crews", "This autumn",
                                     "Repairs took longer than planned"};
  return {"Local schools will open a week later this autumn after repairs ran long.",
          std::vector<std::string>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k)),
          "School opening is delayed by a week because repairs overran"};
}

std::vector<QuestionSpec> first_questions(std::size_t k) {
  return {builtin_bank().begin(), builtin_bank().begin() + static_cast<std::ptrdiff_t>(k)};
}

std::string golden(const char* name) { return read_file(fixtures_dir() / "prompts" / name); }

class QaGolden : public ::testing::TestWithParam<std::size_t> {};

TEST_P(QaGolden, MatchesFrozenFile) {
  const auto k = GetParam();
  const std::vector<IclExample> examples{example(k)};
  const auto bundle = build_qa_prompt(kArticle, first_questions(k), examples);
  EXPECT_EQ(bundle.text, golden(("qa_k" + std::to_string(k) + ".txt").c_str()));
  EXPECT_EQ(bundle.k, static_cast<int>(k));
  EXPECT_EQ(bundle.question_keys.size(), k);
  EXPECT_EQ(bundle.kind, Method::kQa);
}

INSTANTIATE_TEST_SUITE_P(K, QaGolden, ::testing::Values(0u, 2u, 5u));

TEST(QaPrompt, KZeroEqualsIcl) {
  const std::vector<IclExample> examples{example(0)};
  const auto qa = build_qa_prompt(kArticle, {}, examples);
  EXPECT_EQ(qa.text, build_icl_prompt(kArticle, examples).text);
  EXPECT_EQ(qa.text.find("Q1:"), std::string::npos);
  EXPECT_EQ(qa.stop_sequences, build_icl_prompt(kArticle, examples).stop_sequences);
}

TEST(QaPrompt, AnswerCountMismatch) {
  const std::vector<IclExample> examples{example(2), example(1)};
  try {
    build_qa_prompt(kArticle, first_questions(2), examples);
    FAIL() << "expected AnswerCountMismatch";
  } catch (const AnswerCountMismatch& e) {
    EXPECT_EQ(e.example_index(), 1u);
  }
}

TEST(QaPrompt, MarkersAndStops) {
  const auto bundle = build_qa_prompt(kArticle, first_questions(3), {});
  EXPECT_EQ(bundle.answer_markers, (std::vector<std::string>{"A1:", "A2:", "A3:"}));
  EXPECT_EQ(bundle.question_keys, (std::vector<std::string>{"topic", "key_pts", "entities"}));
  ASSERT_EQ(bundle.stop_sequences.size(), 1u);
  EXPECT_EQ(bundle.stop_sequences[0], PromptTemplates{}.qa_instruction);
}

TEST(QaPrompt, MonotoneQuestionBlock) {
  for (std::size_t k = 1; k <= 10; ++k) {
    const auto prev = build_qa_prompt(kArticle, first_questions(k - 1), {}).text;
    const auto next = build_qa_prompt(kArticle, first_questions(k), {}).text;
    if (k == 1) continue;  // k = 0 uses the summarize template
    const auto stem = prev.substr(0, prev.size() - 2);  // drop the trailing "A:"
    ASSERT_EQ(next.substr(0, stem.size()), stem);
    EXPECT_EQ(next.substr(stem.size()),
              "Q" + std::to_string(k) + ": " + builtin_bank()[k - 1].text + "\nA:");
  }
}

TEST(QaPrompt, Deterministic) {
  const std::vector<IclExample> examples{example(5)};
  EXPECT_EQ(build_qa_prompt(kArticle, first_questions(5), examples).text,
            build_qa_prompt(kArticle, first_questions(5), examples).text);
}

TEST(SingleQa, MatchesFrozenFile) {
  const auto bundle = build_single_qa(kArticle, builtin_bank()[0]);
  EXPECT_EQ(bundle.text, golden("single_qa_topic.txt"));
  EXPECT_EQ(bundle.k, 1);
  EXPECT_EQ(bundle.kind, Method::kQa);
}

TEST(SingleQa, QuestionsDifferOnlyInQLine) {
  const auto a = build_single_qa(kArticle, builtin_bank()[0]).text;
  const auto b = build_single_qa(kArticle, builtin_bank()[6]).text;
  const auto q = a.rfind("\nQ: ");
  EXPECT_EQ(a.substr(0, q), b.substr(0, q));
  EXPECT_EQ(b.substr(q), "\nQ: " + builtin_bank()[6].text + "\nA:");
}

TEST(SingleQa, EmptyArticleStillRenders) {
  EXPECT_EQ(build_single_qa("", builtin_bank()[1]).text,
            "Given the following article, answer the question.\n\nQ: " + builtin_bank()[1].text + "\nA:");
}

TEST(SingleQa, AnswerCutAtNextQuestion) {
  const auto bundle = build_single_qa(kArticle, builtin_bank()[0]);
  EXPECT_EQ(parse_single_answer(" The budget.\nQ: something else", bundle), "The budget.");
}

TEST(Vanilla, MatchesFrozenFile) {
  const auto bundle = build_vanilla(kArticle);
  EXPECT_EQ(bundle.text, golden("vanilla.txt"));
  EXPECT_EQ(bundle.kind, Method::kVanilla);
}

TEST(Vanilla, ExactlyOneSummaryMarker) {
  const auto text = build_vanilla(kArticle).text;
  const auto first = text.find("Summary:");
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(text.find("Summary:", first + 1), std::string::npos);
}

TEST(Icl, NoExamplesEqualsVanilla) {
  EXPECT_EQ(build_icl_prompt(kArticle, {}).text, build_vanilla(kArticle).text);
}

TEST(Icl, ContainsExampleReference) {
  const std::vector<IclExample> examples{example(0)};
  EXPECT_NE(build_icl_prompt(kArticle, examples).text.find(examples[0].reference), std::string::npos);
}

TEST(Templates, OverridesApply) {
  PromptTemplates t;
  t.summarize_instruction = "Write a one-line summary.";
  EXPECT_EQ(build_vanilla("x y", t).text, "Write a one-line summary.\nx y\nSummary:");
}

// ---- parsing ----------------------------------------------------------------

PromptBundle qa_bundle(std::size_t k) { return build_qa_prompt(kArticle, first_questions(k), {}); }

TEST(ParseOutput, RenderedBlockRoundTrips) {
  const std::vector<std::string> answers{"x1", "x2"};
  const auto out = parse_output(render_answer_block(answers, "s"), qa_bundle(2));
  EXPECT_EQ(out.answers, answers);
  EXPECT_EQ(out.summary, "s");
  EXPECT_EQ(out.status, ParseStatus::kOk);
}

TEST(ParseOutput, FallbackWithoutSummaryMarker) {
  const auto completion = read_file(fixtures_dir() / "parser/fallback_k2.txt");
  const auto out = parse_output(completion, qa_bundle(2));
  EXPECT_EQ(out.status, ParseStatus::kFallback);
  EXPECT_EQ(out.answers, (std::vector<std::string>{"The council budget", "Parks get ten percent more"}));
  EXPECT_EQ(out.summary, "The council passed a budget that raises park funding");
}

TEST(ParseOutput, GarbageFails) {
  const auto completion = read_file(fixtures_dir() / "parser/failed_k2.txt");
  const auto out = parse_output(completion, qa_bundle(2));
  EXPECT_EQ(out.status, ParseStatus::kFailed);
  EXPECT_EQ(out.summary, "");
}

TEST(ParseOutput, MissingMarkerFails) {
  const auto out = parse_output(" A1: one. Summary: s.", qa_bundle(2));
  EXPECT_EQ(out.status, ParseStatus::kFailed);
  EXPECT_EQ(out.summary, "");
}

TEST(ParseOutput, EmptySummaryFails) {
  EXPECT_EQ(parse_output(" A1: a. A2: b.\nSummary: .", qa_bundle(2)).status, ParseStatus::kFailed);
}

TEST(ParseOutput, LastSummaryMarkerWins) {
  const auto out = parse_output(" A1: Summary: of events. A2: b.\nSummary: real one.", qa_bundle(2));
  EXPECT_EQ(out.status, ParseStatus::kOk);
  EXPECT_EQ(out.answers[0], "Summary: of events");
  EXPECT_EQ(out.summary, "real one");
}

TEST(ParseOutput, StopsAtNextExampleHeader) {
  const auto completion =
      render_answer_block(std::vector<std::string>{"a", "b"}, "s") + "\n\n" + PromptTemplates{}.qa_instruction +
      "\nmore text\nSummary: wrong.";
  const auto out = parse_output(completion, qa_bundle(2));
  EXPECT_EQ(out.summary, "s");
  EXPECT_EQ(out.status, ParseStatus::kOk);
}

TEST(ParseOutput, MarkersAreCaseSensitive) {
  EXPECT_EQ(parse_output(" a1: x. a2: y.\nsummary: s.", qa_bundle(2)).status, ParseStatus::kFailed);
}

TEST(ParseOutput, IclSummaryIsWholeCompletion) {
  const auto out = parse_output(" Council passes budget.\n\nSummarize the following article.\nnext",
                                build_icl_prompt(kArticle, {}));
  EXPECT_EQ(out.summary, "Council passes budget");
  EXPECT_EQ(out.status, ParseStatus::kOk);
  EXPECT_EQ(parse_output("   ", build_vanilla(kArticle)).status, ParseStatus::kFailed);
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static constexpr std::string_view alphabet = "abcxyzAS019 .,:;'\n-Summary:A1:A2:";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

// Removes marker substrings and surrounding whitespace until nothing changes.
std::string strip_markers(std::string s) {
  static const std::regex markers(R"(A[0-9]+:|Summary:)");
  for (;;) {
    auto next = std::regex_replace(s, markers, "");
    const auto first = next.find_first_not_of(" \t\r\n");
    next = first == std::string::npos ? "" : next.substr(first, next.find_last_not_of(" \t\r\n") - first + 1);
    if (next == s) return s;
    s = std::move(next);
  }
}

TEST(ParseOutput, RoundTripProperty) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng() % 10;
    std::vector<std::string> answers(k);
    for (auto& a : answers) a = strip_markers(random_text(rng, 24));
    auto summary = strip_markers(random_text(rng, 40));
    if (summary.empty()) summary = "s";
    const auto out = parse_output(render_answer_block(answers, summary), qa_bundle(k));
    ASSERT_EQ(out.status, ParseStatus::kOk) << "trial " << trial;
    ASSERT_EQ(out.answers, answers) << "trial " << trial;
    ASSERT_EQ(out.summary, summary) << "trial " << trial;
  }
}

}  // namespace
}  // namespace qap
