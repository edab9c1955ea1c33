#pragma once

#include <stdexcept>
#include <string>

namespace datekit {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A parameter lies outside the domain an operation is defined on.
class InvalidDomain : public Error {
public:
    using Error::Error;
};

class InvalidBand : public Error {
public:
    using Error::Error;
};

/// Raised when n1 > n2 for the one-sample reduction.
class SampleOrder : public Error {
public:
    using Error::Error;
};

/// No statistic exceeded the tuning cutoff, so the sparsity estimate is undefined.
class NoExceedances : public Error {
public:
    using Error::Error;
};

class NonpositiveDiagonal : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidDomain(what);
}

inline void require_dims(bool cond, const std::string& what) {
    if (!cond) throw DimensionMismatch(what);
}

}  // namespace detail
}  // namespace datekit
