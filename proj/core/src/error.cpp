#include "qaprompt/error.hpp"

namespace qap {

MalformedRecord::MalformedRecord(std::size_t line, const std::string& reason)
    : CorpusError("malformed record at line " + std::to_string(line) + ": " + reason),
      line_(line),
      reason_(reason) {}

DuplicateId::DuplicateId(std::size_t line, const std::string& id)
    : CorpusError("duplicate id '" + id + "' at line " + std::to_string(line)), id_(id) {}

UnknownDomain::UnknownDomain(const std::string& name)
    : CorpusError("unknown domain '" + name + "'"), name_(name) {}

UnknownDomain::UnknownDomain(std::size_t line, const std::string& name)
    : CorpusError("unknown domain '" + name + "' at line " + std::to_string(line)), name_(name) {}

GroupTooSmall::GroupTooSmall(const std::string& domain, const std::string& task)
    : CorpusError("group (" + domain + ", " + task + ") has fewer than 2 instances") {}

InsufficientPool::InsufficientPool(const std::string& domain, const std::string& task,
                                   std::size_t available, std::size_t requested)
    : CorpusError("ICL pool for (" + domain + ", " + task + ") has " + std::to_string(available) +
                  " instances, " + std::to_string(requested) + " requested"),
      available_(available),
      requested_(requested) {}

KOutOfRange::KOutOfRange(std::size_t k, std::size_t max)
    : Error(ErrorCode::kInvalidArgument,
            "k = " + std::to_string(k) + " outside [0, " + std::to_string(max) + "]") {}

ModelMismatch::ModelMismatch(const std::string& ranking_model, const std::string& config_model)
    : Error(ErrorCode::kModelMismatch, "ranking was computed for model '" + ranking_model +
                                           "' but the run uses '" + config_model + "'") {}

AnswerCountMismatch::AnswerCountMismatch(std::size_t example_index, std::size_t expected,
                                         std::size_t actual)
    : Error(ErrorCode::kInvalidArgument,
            "in-context example " + std::to_string(example_index) + " has " +
                std::to_string(actual) + " answers, expected " + std::to_string(expected)),
      example_index_(example_index) {}

}  // namespace qap
