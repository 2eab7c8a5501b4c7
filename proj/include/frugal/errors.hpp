#pragma once

#include <stdexcept>
#include <string>

namespace frugal {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- corpus ---------------------------------------------------------------

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("malformed record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NonAlternatingSpeakers : public Error {
 public:
  explicit NonAlternatingSpeakers(std::string id)
      : Error("speakers do not alternate in conversation '" + id + "'"), id_(std::move(id)) {}
  const std::string& conversation_id() const noexcept { return id_; }

 private:
  std::string id_;
};

class TooShort : public Error {
 public:
  explicit TooShort(const std::string& id)
      : Error("conversation '" + id + "' has fewer than 2 utterances") {}
};

class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

// --- prompt engine --------------------------------------------------------

class BadTemplate : public Error {
 public:
  BadTemplate(const std::string& id, const std::string& reason)
      : Error("bad template '" + id + "': " + reason) {}
};

class MissingSlotData : public Error {
 public:
  explicit MissingSlotData(const std::string& slot) : Error("no data for slot [" + slot + "]") {}
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("no instance available for random exemplar fallback") {}
};

class UnknownTokenizer : public Error {
 public:
  explicit UnknownTokenizer(const std::string& id) : Error("unknown tokenizer '" + id + "'") {}
};

// --- remote providers -----------------------------------------------------

// Anything that went wrong talking to an external model or service.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class ServiceUnavailable : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class Timeout : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class RateLimited : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class HttpError : public ProviderError {
 public:
  HttpError(int status, const std::string& body)
      : ProviderError("HTTP " + std::to_string(status) + (body.empty() ? "" : ": " + body)),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class UnknownSummarizer : public ProviderError {
 public:
  explicit UnknownSummarizer(const std::string& id) : ProviderError("unknown summarizer '" + id + "'") {}
};

class UnknownMetric : public ProviderError {
 public:
  explicit UnknownMetric(const std::string& id) : ProviderError("unknown metric '" + id + "'") {}
};

class LogprobsUnsupported : public ProviderError {
 public:
  explicit LogprobsUnsupported(const std::string& model)
      : ProviderError("model '" + model + "' does not expose token log-probabilities") {}
};

class DimensionMismatch : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class ZeroVector : public Error {
 public:
  explicit ZeroVector(const std::string& embedder)
      : Error("embedder '" + embedder + "' returned an all-zero vector") {}
};

// --- metrics / harness ----------------------------------------------------

class NonPositiveLength : public Error {
 public:
  explicit NonPositiveLength(double l) : Error("L_H must be positive, got " + std::to_string(l)) {}
};

class MissingScores : public Error {
 public:
  explicit MissingScores(const std::string& metric) : Error("records lack scores for metric '" + metric + "'") {}
};

class ConfigInvalid : public Error {
 public:
  using Error::Error;
};

class StoreCorrupt : public Error {
 public:
  using Error::Error;
};

}  // namespace frugal
