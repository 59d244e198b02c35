#pragma once

#include <stdexcept>
#include <string>

namespace stldac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot form a usable corpus (e.g. empty after filtering).
class CorpusError : public Error {
public:
    using Error::Error;
};

/// A parameter container or config violates an invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A serialized artifact has an unknown schema or version.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A serialized artifact could not be parsed.
class CorruptFileError : public Error {
public:
    using Error::Error;
};

/// Maintained sufficient statistics disagree with the sampler's preconditions.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// A numerical routine produced a value it cannot continue from.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace stldac
