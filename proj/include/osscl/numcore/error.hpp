#pragma once

#include <stdexcept>
#include <string>

namespace osscl {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A row whose Euclidean norm is too small to normalize.
class DegenerateNorm : public Error {
public:
    using Error::Error;
};

// A log-softmax row with every entry excluded.
class AllMaskedRow : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

// Malformed or truncated file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

// An observed class with no labeled sample to build a prototype from.
class EmptyClass : public Error {
public:
    using Error::Error;
};

class DegenerateCentroid : public Error {
public:
    using Error::Error;
};

// A stream step requested more samples than its pool holds.
class PoolExhausted : public Error {
public:
    using Error::Error;
};

// Memory too small to keep one exemplar per observed class.
class CapacityError : public Error {
public:
    using Error::Error;
};

}  // namespace osscl
