#pragma once

#include <stdexcept>
#include <string>

namespace grnet {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NotSquare : public Error {
public:
    using Error::Error;
};

class NotSymmetric : public Error {
public:
    using Error::Error;
};

// Carries the offending min/max diagonal ratio of the R factor.
class RankDeficient : public Error {
public:
    explicit RankDeficient(const std::string& what, double ratio = 0.0)
        : Error(what), diag_ratio(ratio) {}
    double diag_ratio;
};

class SingularR : public Error {
public:
    using Error::Error;
};

class DegenerateSpectrum : public Error {
public:
    using Error::Error;
};

class CacheMismatch : public Error {
public:
    using Error::Error;
};

class BadGrouping : public Error {
public:
    using Error::Error;
};

class BadPatchSize : public Error {
public:
    using Error::Error;
};

class BadLabel : public Error {
public:
    using Error::Error;
};

class ConfigInvalid : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

// File-format errors (datasets and model files).
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagic : public FormatError {
public:
    using FormatError::FormatError;
};

class BadVersion : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
public:
    using FormatError::FormatError;
};

class InvariantViolation : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace grnet
