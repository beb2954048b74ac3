#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace omniact {

// Base for every error the library reports. Callers that only care about
// "something went wrong" catch this; everything else dispatches on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoMatch : public Error {
 public:
  explicit NoMatch(std::string raw)
      : Error("label does not match the taxonomy: '" + raw + "'"), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Corpus loading. `line` is 1-based; 0 means "not from a file".
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : Error("line " + std::to_string(line) + ": field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class DuplicateId : public Error {
 public:
  DuplicateId(std::size_t line, std::string id)
      : Error("line " + std::to_string(line) + ": duplicate id '" + id + "'"),
        line_(line),
        id_(std::move(id)) {}
  std::size_t line() const { return line_; }
  const std::string& id() const { return id_; }

 private:
  std::size_t line_;
  std::string id_;
};

class LabelOutsideTaxonomy : public Error {
 public:
  LabelOutsideTaxonomy(std::size_t line, std::string raw)
      : Error("line " + std::to_string(line) + ": label outside taxonomy: '" + raw + "'"),
        line_(line),
        raw_(std::move(raw)) {}
  std::size_t line() const { return line_; }
  const std::string& raw() const { return raw_; }

 private:
  std::size_t line_;
  std::string raw_;
};

class UnlabeledEntry : public Error {
 public:
  explicit UnlabeledEntry(const std::string& id) : Error("entry '" + id + "' has no labels") {}
};

// Prompt assembly.
class EmptyFewShots : public Error {
 public:
  EmptyFewShots() : Error("in-context prompt requested with no few-shot exemplars") {}
};

class FamilyMismatch : public Error {
 public:
  using Error::Error;
};

class MissingGoalReason : public Error {
 public:
  explicit MissingGoalReason(const std::string& id)
      : Error("entry '" + id + "' has no goal/reason text") {}
};

class MissingModality : public Error {
 public:
  explicit MissingModality(const std::string& modality)
      : Error("few-shot pool has no entry with target '" + modality + "'"), modality_(modality) {}
  const std::string& modality() const { return modality_; }

 private:
  std::string modality_;
};

// Export.
class MissingCot : public Error {
 public:
  explicit MissingCot(const std::string& id)
      : Error("entry '" + id + "' has no chain-of-thought text"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

// Evaluation.
class EmptyEvaluation : public Error {
 public:
  EmptyEvaluation() : Error("no samples to evaluate") {}
};

class CorpusTooSmall : public Error {
 public:
  explicit CorpusTooSmall(std::size_t n)
      : Error("corpus of " + std::to_string(n) + " entries is too small to split (need >= 4)") {}
};

}  // namespace omniact
