#pragma once

#include <stdexcept>
#include <string>

namespace lift {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// domain
struct EmptyDatasetError : Error {
    explicit EmptyDatasetError(const std::string& m) : Error(m) {}
};
struct BadFractionsError : Error {
    explicit BadFractionsError(const std::string& m) : Error(m) {}
};
struct BadAnchorError : Error {
    explicit BadAnchorError(const std::string& m) : Error(m) {}
};

// ingest
struct SchemaError : Error {
    explicit SchemaError(const std::string& m) : Error(m) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(m) {}
};

// numeric core
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error(m) {}
};
struct NotScalarError : Error {
    explicit NotScalarError(const std::string& m) : Error(m) {}
};
struct MissingGradError : Error {
    explicit MissingGradError(const std::string& m) : Error(m) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& m) : Error(m) {}
};

// encoder
struct VocabError : Error {
    explicit VocabError(const std::string& m) : Error(m) {}
};
struct TooShortError : Error {
    explicit TooShortError(const std::string& m) : Error(m) {}
};
struct EmptyCorpusError : Error {
    explicit EmptyCorpusError(const std::string& m) : Error(m) {}
};

// retriever
struct IndexEmptyError : Error {
    explicit IndexEmptyError(const std::string& m) : Error(m) {}
};
struct CorruptDatastoreError : Error {
    explicit CorruptDatastoreError(const std::string& m) : Error(m) {}
};

// eval
struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& m) : Error(m) {}
};
struct TooFewQueriesError : Error {
    explicit TooFewQueriesError(const std::string& m) : Error(m) {}
};

// pipeline
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(m) {}
};
struct StageOrderError : Error {
    explicit StageOrderError(const std::string& m) : Error(m) {}
};

}  // namespace lift
