#pragma once

#include <stdexcept>
#include <string>

namespace etcnas {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct UnreachableNode : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SchemaVersionMismatch : Error { using Error::Error; };
struct ArityViolation : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct DomainViolation : Error { using Error::Error; };
struct UnknownReference : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct OutOfOrderObservation : Error { using Error::Error; };
struct NOutOfRange : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct UnsupportedLinkType : Error { using Error::Error; };
struct NoHandshakeFound : Error { using Error::Error; };
struct NotQuic : Error { using Error::Error; };
struct MagicMismatch : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct EmptyMatrix : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };

} // namespace etcnas
