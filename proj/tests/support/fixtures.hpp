#pragma once

// Shared test fixtures: a small three-domain corpus and a scripted backend
// whose completions are a pure function of the prompt.

#include <atomic>
#include <fstream>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qaprompt/corpus.hpp"
#include "qaprompt/lm.hpp"
#include "qaprompt/metrics.hpp"
#include "qaprompt/prompting.hpp"
#include "qaprompt/questions.hpp"

namespace qap::testing {

inline std::filesystem::path source_dir() { return QAPROMPT_TEST_SOURCE_DIR; }
inline std::filesystem::path fixtures_dir() { return source_dir() / "fixtures"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("qaprompt-" + std::string(tag) + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Six instances, two per domain (News, Reviews, Dialogue), one task per domain.
/// Every reference has an even number of words.
inline std::vector<TaskInstance> fixture_instances() {
  return {
      {"news-1", "News", "xsum",
       "Firefighters were called to a laboratory on the third floor of the university campus. Hundreds of "
       "students were evacuated and nobody was injured.",
       "Students were evacuated after a small laboratory fire on campus"},
      {"news-2", "News", "xsum",
       "The city council approved a new budget on Monday. Funding for parks rises by ten percent while road "
       "repairs are delayed until spring.",
       "Council approves budget raising park funding and delaying road repairs"},
      {"reviews-1", "Reviews", "amazon_food",
       "These dog treats arrived quickly and my terrier loves them. The bag reseals well but the price went "
       "up since my last order.",
       "Terrier loves these treats though the price has gone up"},
      {"reviews-2", "Reviews", "amazon_food",
       "The coffee tastes burnt and bitter. I tried three brewing methods and none of them helped, so I will "
       "not buy it again.",
       "Bitter burnt coffee that no brewing method could ever fix"},
      {"dialogue-1", "Dialogue", "samsum",
       "Anna: are we still meeting at six? Ben: yes, at the station cafe. Anna: great, I will bring the "
       "tickets.",
       "Anna and Ben meet at six and Anna brings tickets"},
      {"dialogue-2", "Dialogue", "samsum",
       "Carl: the printer is broken again. Dana: I will call the technician tomorrow morning. Carl: thanks, I "
       "need it by noon.",
       "Dana will call a technician because the printer is broken"},
  };
}

inline Corpus fixture_corpus() { return Corpus(fixture_instances()); }

inline std::string join_tokens(const TokenList& tokens, std::size_t count) {
  std::string out;
  for (std::size_t i = 0; i < count && i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

/// Scripted single-question answers: `topic` copies the reference, `tone` shares
/// no word with it, and every other question adds bank-index-many filler
/// words after the reference's first four words, so precision falls strictly
/// with bank position.
inline std::string scripted_answer(const QuestionSpec& question, const std::string& reference) {
  if (question.key == "topic") return reference;
  if (question.key == "tone") return "purple monkey dishwasher";
  const auto idx = bank_index(question.key);
  std::string out = join_tokens(tokenize(reference), 4);
  for (std::size_t i = 0; i < idx; ++i) out += " filler" + std::string(1, static_cast<char>('a' + i));
  return out;
}

/// Line following the last occurrence of `header` in `prompt`.
inline std::string line_after_last(std::string_view prompt, std::string_view header) {
  const auto at = prompt.rfind(header);
  if (at == std::string_view::npos) return {};
  const auto start = prompt.find('\n', at);
  if (start == std::string_view::npos) return {};
  const auto end = prompt.find('\n', start + 1);
  return std::string(prompt.substr(start + 1, end == std::string_view::npos ? end : end - start - 1));
}

/// Completions by prompt kind:
///   single question  -> scripted_answer
///   QA (k >= 1)      -> well-formed answers then the reference as summary
///   ICL / vanilla    -> the first half of the reference's tokens
inline FunctionBackend::Fn scripted_backend(const std::vector<TaskInstance>& instances,
                                            PromptTemplates templates = {}) {
  return [instances, templates](const CompletionRequest& req) -> BackendResponse {
    auto find_reference = [&](const std::string& article) -> std::string {
      for (const auto& inst : instances) {
        if (inst.article == article) return inst.reference;
      }
      return "unknown article";
    };
    const std::string_view prompt = req.prompt;
    if (prompt.rfind(templates.single_qa_instruction, 0) == 0) {
      const auto reference = find_reference(line_after_last(prompt, templates.single_qa_instruction));
      const auto q_at = prompt.rfind("\nQ: ");
      const auto q_end = prompt.find('\n', q_at + 1);
      const auto q_text = std::string(prompt.substr(q_at + 4, q_end - q_at - 4));
      for (const auto& q : builtin_bank()) {
        if (q.text == q_text) return {" " + scripted_answer(q, reference), FinishReason::kStop};
      }
      return {" no idea", FinishReason::kStop};
    }
    if (prompt.rfind(templates.qa_instruction, 0) == 0) {
      const auto reference = find_reference(line_after_last(prompt, templates.qa_instruction));
      const auto block = prompt.substr(prompt.rfind(templates.qa_instruction));
      std::vector<std::string> answers;
      for (int i = 1;; ++i) {
        if (block.find("\nQ" + std::to_string(i) + ": ") == std::string_view::npos) break;
        answers.push_back("answer " + std::to_string(i));
      }
      return {render_answer_block(answers, reference) + "\n\n", FinishReason::kStop};
    }
    const auto reference = find_reference(line_after_last(prompt, templates.summarize_instruction));
    const auto tokens = tokenize(reference);
    return {" " + join_tokens(tokens, tokens.size() / 2) + ".", FinishReason::kStop};
  };
}

/// Random lowercase token lists over a small alphabet, so overlaps are common.
inline TokenList random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab = 5) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> word(0, vocab - 1);
  TokenList out(len(rng));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + word(rng)));
  return out;
}

}  // namespace qap::testing
