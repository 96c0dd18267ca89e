#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qap {

// Process exit codes used by the CLI. Each error class maps to exactly one.
enum class ErrorCode : int {
  kOk = 0,
  kUsage = 2,
  kInvalidArgument = 3,
  kCorpus = 4,
  kIo = 5,
  kBackendUnreachable = 10,
  kRateLimited = 11,
  kReplayMiss = 12,
  kBackend = 13,
  kRanking = 20,
  kModelMismatch = 21,
  kMismatchedEvalSets = 30,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::kInvalidArgument, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

// ---- corpus -----------------------------------------------------------------

class CorpusError : public Error {
 public:
  explicit CorpusError(const std::string& what) : Error(ErrorCode::kCorpus, what) {}
};

class MalformedRecord : public CorpusError {
 public:
  MalformedRecord(std::size_t line, const std::string& reason);
  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

class DuplicateId : public CorpusError {
 public:
  DuplicateId(std::size_t line, const std::string& id);
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class UnknownDomain : public CorpusError {
 public:
  explicit UnknownDomain(const std::string& name);
  UnknownDomain(std::size_t line, const std::string& name);
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class GroupTooSmall : public CorpusError {
 public:
  GroupTooSmall(const std::string& domain, const std::string& task);
};

class InsufficientPool : public CorpusError {
 public:
  InsufficientPool(const std::string& domain, const std::string& task, std::size_t available,
                   std::size_t requested);
  std::size_t available() const noexcept { return available_; }
  std::size_t requested() const noexcept { return requested_; }

 private:
  std::size_t available_;
  std::size_t requested_;
};

// ---- metrics ----------------------------------------------------------------

class EmptyAnswer : public Error {
 public:
  EmptyAnswer() : Error(ErrorCode::kInvalidArgument, "answer has no words") {}
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error(ErrorCode::kInvalidArgument, "aggregate called with no rows") {}
};

// ---- lm ---------------------------------------------------------------------

class BackendUnreachable : public Error {
 public:
  explicit BackendUnreachable(const std::string& what)
      : Error(ErrorCode::kBackendUnreachable, "backend unreachable: " + what) {}
};

class RateLimited : public Error {
 public:
  explicit RateLimited(const std::string& what)
      : Error(ErrorCode::kRateLimited, "rate limited: " + what) {}
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(const std::string& digest)
      : Error(ErrorCode::kReplayMiss, "no replay recording for key " + digest), digest_(digest) {}
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what)
      : Error(ErrorCode::kBackend, "backend error: " + what) {}
};

// ---- questions --------------------------------------------------------------

class KOutOfRange : public Error {
 public:
  KOutOfRange(std::size_t k, std::size_t max);
};

class RankingError : public Error {
 public:
  explicit RankingError(const std::string& what) : Error(ErrorCode::kRanking, what) {}
};

class ModelMismatch : public Error {
 public:
  ModelMismatch(const std::string& ranking_model, const std::string& config_model);
};

// ---- prompting --------------------------------------------------------------

class AnswerCountMismatch : public Error {
 public:
  AnswerCountMismatch(std::size_t example_index, std::size_t expected, std::size_t actual);
  std::size_t example_index() const noexcept { return example_index_; }

 private:
  std::size_t example_index_;
};

// ---- harness ----------------------------------------------------------------

class MismatchedEvalSets : public Error {
 public:
  explicit MismatchedEvalSets(const std::string& what)
      : Error(ErrorCode::kMismatchedEvalSets, "mismatched eval sets: " + what) {}
};

}  // namespace qap
