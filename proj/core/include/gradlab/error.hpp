#pragma once

#include <stdexcept>
#include <string>

namespace gradlab {

// Error categories map onto the CLI exit-code taxonomy:
//   ConfigError, DataError, IncompatibleRunsError -> 2 (bad input / configuration)
//   IntegrityError, NoViableRewriteError          -> 3 (missing or corrupted artifact)
//   everything else                               -> 4 (invariant violation during a run)
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class NoViableRewriteError : public Error {
public:
    using Error::Error;
};

class IncompatibleRunsError : public Error {
public:
    using Error::Error;
};

} // namespace gradlab
