#pragma once

#include <stdexcept>
#include <string>

namespace emvid {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct VersionMismatch : FormatError {
    using FormatError::FormatError;
};

struct SyntaxError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};

struct EmptyMask : Error {
    using Error::Error;
};
struct EmptyResult : Error {
    using Error::Error;
};
struct EmptyPairSet : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};
struct InvalidEdges : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct CountMismatch : Error {
    using Error::Error;
};
struct CoordinateOutOfRange : Error {
    using Error::Error;
};
struct DuplicateCoordinate : Error {
    using Error::Error;
};
struct UnknownEntity : Error {
    using Error::Error;
};
struct InvalidK : Error {
    using Error::Error;
};

} // namespace emvid
