#include "qaprompt/prompting.hpp"

#include "qaprompt/error.hpp"
#include "qaprompt/lm.hpp"

namespace qap {

namespace {

constexpr std::string_view kSummaryMarker = "Summary:";
constexpr std::string_view kBlockSeparator = "\n\n";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// The output template closes every answer and the summary with a period.
std::string strip_closing_period(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return std::string(s);
}

std::string answer_marker(std::size_t i) { return "A" + std::to_string(i) + ":"; }

bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Marker occurrence at or after `from` that starts the text or follows a non-alphanumeric byte.
std::size_t find_marker(std::string_view text, std::string_view marker, std::size_t from) {
  for (auto pos = text.find(marker, from); pos != std::string_view::npos;
       pos = text.find(marker, pos + 1)) {
    if (pos == 0 || !is_alnum(text[pos - 1])) return pos;
  }
  return std::string_view::npos;
}

void append_qa_block(std::string& out, std::string_view instruction, std::string_view article,
                     std::span<const QuestionSpec> questions) {
  out += instruction;
  out += '\n';
  out += article;
  out += '\n';
  for (std::size_t i = 0; i < questions.size(); ++i) {
    out += 'Q';
    out += std::to_string(i + 1);
    out += ": ";
    out += questions[i].text;
    out += '\n';
  }
  out += "A:";
}

void append_summarize_block(std::string& out, std::string_view instruction, std::string_view article) {
  out += instruction;
  out += '\n';
  out += article;
  out += '\n';
  out += kSummaryMarker;
}

}  // namespace

std::string render_answer_block(std::span<const std::string> answers, std::string_view summary) {
  std::string out;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    out += ' ';
    out += answer_marker(i + 1);
    out += ' ';
    out += answers[i];
    out += '.';
  }
  out += '\n';
  out += kSummaryMarker;
  out += ' ';
  out += summary;
  out += '.';
  return out;
}

PromptBundle build_icl_prompt(std::string_view article, std::span<const IclExample> examples,
                              const PromptTemplates& templates) {
  PromptBundle b;
  b.kind = Method::kIcl;
  for (const auto& ex : examples) {
    append_summarize_block(b.text, templates.summarize_instruction, ex.article);
    b.text += ' ';
    b.text += ex.reference;
    b.text += '.';
    b.text += kBlockSeparator;
  }
  append_summarize_block(b.text, templates.summarize_instruction, article);
  b.stop_sequences = {templates.summarize_instruction};
  return b;
}

PromptBundle build_vanilla(std::string_view article, const PromptTemplates& templates) {
  auto b = build_icl_prompt(article, {}, templates);
  b.kind = Method::kVanilla;
  return b;
}

PromptBundle build_qa_prompt(std::string_view article, std::span<const QuestionSpec> questions,
                             std::span<const IclExample> examples, const PromptTemplates& templates) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].answers.size() != questions.size())
      throw AnswerCountMismatch(i, questions.size(), examples[i].answers.size());
  }
  if (questions.empty()) {
    auto b = build_icl_prompt(article, examples, templates);
    b.kind = Method::kQa;
    return b;
  }
  PromptBundle b;
  b.kind = Method::kQa;
  b.k = static_cast<int>(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    b.question_keys.push_back(questions[i].key);
    b.answer_markers.push_back(answer_marker(i + 1));
  }
  for (const auto& ex : examples) {
    append_qa_block(b.text, templates.qa_instruction, ex.article, questions);
    b.text += render_answer_block(ex.answers, ex.reference);
    b.text += kBlockSeparator;
  }
  append_qa_block(b.text, templates.qa_instruction, article, questions);
  b.stop_sequences = {templates.qa_instruction};
  return b;
}

PromptBundle build_single_qa(std::string_view article, const QuestionSpec& question,
                             const PromptTemplates& templates) {
  PromptBundle b;
  b.kind = Method::kQa;
  b.k = 1;
  b.question_keys = {question.key};
  b.answer_markers = {"A:"};
  b.text += templates.single_qa_instruction;
  b.text += '\n';
  b.text += article;
  b.text += "\nQ: ";
  b.text += question.text;
  b.text += "\nA:";
  b.stop_sequences = {templates.single_qa_instruction, "\nQ:"};
  return b;
}

std::string parse_single_answer(std::string_view completion, const PromptBundle& bundle) {
  std::string text(completion);
  truncate_at_stop(text, bundle.stop_sequences);
  return std::string(trim(text));
}

ParsedOutput parse_output(std::string_view completion, const PromptBundle& bundle) {
  std::string owned(completion);
  truncate_at_stop(owned, bundle.stop_sequences);
  const std::string_view text = owned;
  ParsedOutput out;

  if (bundle.kind != Method::kQa || bundle.k == 0) {
    out.summary = strip_closing_period(text);
    out.status = out.summary.empty() ? ParseStatus::kFailed : ParseStatus::kOk;
    return out;
  }

  const auto k = static_cast<std::size_t>(bundle.k);
  std::vector<std::size_t> starts, ends;
  std::size_t pos = 0;
  for (std::size_t i = 1; i <= k; ++i) {
    const auto marker = answer_marker(i);
    const auto at = find_marker(text, marker, pos);
    if (at == std::string_view::npos) break;
    starts.push_back(at);
    ends.push_back(at + marker.size());
    pos = ends.back();
  }
  for (std::size_t i = 0; i + 1 < starts.size(); ++i)
    out.answers.push_back(strip_closing_period(text.substr(ends[i], starts[i + 1] - ends[i])));
  if (starts.size() < k) {
    if (!starts.empty()) out.answers.push_back(strip_closing_period(text.substr(ends.back())));
    out.status = ParseStatus::kFailed;
    return out;
  }

  const auto last_end = ends.back();
  const auto summary_at = text.rfind(kSummaryMarker);
  if (summary_at != std::string_view::npos && summary_at >= last_end) {
    out.answers.push_back(strip_closing_period(text.substr(last_end, summary_at - last_end)));
    out.summary = strip_closing_period(text.substr(summary_at + kSummaryMarker.size()));
    out.status = out.summary.empty() ? ParseStatus::kFailed : ParseStatus::kOk;
    return out;
  }

  // No summary marker: the last answer runs to the end of its line and the
  // remaining text is taken as the summary.
  const auto newline = text.find('\n', last_end);
  if (newline == std::string_view::npos) {
    out.answers.push_back(strip_closing_period(text.substr(last_end)));
    out.status = ParseStatus::kFailed;
    return out;
  }
  out.answers.push_back(strip_closing_period(text.substr(last_end, newline - last_end)));
  out.summary = strip_closing_period(text.substr(newline + 1));
  out.status = out.summary.empty() ? ParseStatus::kFailed : ParseStatus::kFallback;
  return out;
}

}  // namespace qap
