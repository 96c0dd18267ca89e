#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaprompt/metrics.hpp"
#include "qaprompt/questions.hpp"

namespace qap {

/// Instruction lines. The QA instruction is the method's fixed wording; the
/// other two are overridable through the harness config.
struct PromptTemplates {
  std::string qa_instruction =
      "Given the following article, first answer the questions. Then, using the article and "
      "answers as key pointers, generate a summary of the article.";
  std::string single_qa_instruction = "Given the following article, answer the question.";
  std::string summarize_instruction = "Summarize the following article.";
};

/// A completed in-context example. `answers` is ignored by the ICL and vanilla templates.
struct IclExample {
  std::string article;
  std::vector<std::string> answers;
  std::string reference;
};

struct PromptBundle {
  Method kind = Method::kVanilla;
  std::string text;
  int k = 0;
  std::vector<std::string> question_keys;
  std::vector<std::string> answer_markers;  // "A1:" ... "Ak:"
  std::vector<std::string> stop_sequences;
};

struct ParsedOutput {
  std::vector<std::string> answers;
  std::string summary;
  ParseStatus status = ParseStatus::kFailed;
};

/// Example blocks, then the target block ending in "A:". With no questions
/// the result is the ICL prompt (kind stays qa, k = 0).
/// Throws AnswerCountMismatch when an example's answer count differs from the question count.
PromptBundle build_qa_prompt(std::string_view article, std::span<const QuestionSpec> questions,
                             std::span<const IclExample> examples,
                             const PromptTemplates& templates = {});

PromptBundle build_single_qa(std::string_view article, const QuestionSpec& question,
                             const PromptTemplates& templates = {});

PromptBundle build_vanilla(std::string_view article, const PromptTemplates& templates = {});

PromptBundle build_icl_prompt(std::string_view article, std::span<const IclExample> examples,
                              const PromptTemplates& templates = {});

/// The text a model should produce after a QA prompt's trailing "A:",
/// e.g. " A1: x. A2: y.\nSummary: s."
std::string render_answer_block(std::span<const std::string> answers, std::string_view summary);

/// Never throws; every failure mode is reported through ParsedOutput::status.
ParsedOutput parse_output(std::string_view completion, const PromptBundle& bundle);

/// Answer text of a single-question completion, trimmed and cut at the bundle's stops.
std::string parse_single_answer(std::string_view completion, const PromptBundle& bundle);

}  // namespace qap
