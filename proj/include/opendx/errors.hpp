#pragma once
// Exception types shared by every opendx module.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opendx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define OPENDX_ERROR(Name)                  \
    class Name : public Error {             \
    public:                                 \
        using Error::Error;                 \
    }

// domain-core
OPENDX_ERROR(InvalidVisit);
OPENDX_ERROR(MissingExamData);

// cohort-io
OPENDX_ERROR(SchemaError);
OPENDX_ERROR(DegenerateSplit);
OPENDX_ERROR(ConfigError);

// backbone
OPENDX_ERROR(ShapeError);
OPENDX_ERROR(DomainError);
OPENDX_ERROR(EmptyDataset);
OPENDX_ERROR(DegenerateHead);

// openmax
OPENDX_ERROR(TooFewPoints);
OPENDX_ERROR(ModelNotFitted);
OPENDX_ERROR(FitDiverged);
OPENDX_ERROR(InsufficientTail);

// exam-labeler
OPENDX_ERROR(DuplicateStrategy);

// policy-engine
OPENDX_ERROR(InvalidCapability);
OPENDX_ERROR(ProtocolError);
OPENDX_ERROR(SessionClosed);

// bench
OPENDX_ERROR(UndefinedMetric);
OPENDX_ERROR(UnstableMetric);

#undef OPENDX_ERROR

/// Malformed input line; `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(int epoch)
        : Error("training loss became non-finite at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace opendx
