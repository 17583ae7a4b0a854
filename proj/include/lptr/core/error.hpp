#pragma once

#include <stdexcept>
#include <string>

namespace lptr {

/// Base class for all recoverable errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LPTR_DEFINE_ERROR(NAME)                                   \
    class NAME : public Error {                                   \
    public:                                                       \
        explicit NAME(const std::string& msg)                     \
            : Error(std::string(#NAME) + ": " + msg) {}           \
    };

// geometry
LPTR_DEFINE_ERROR(SingularSystem)
LPTR_DEFINE_ERROR(DegenerateDenominator)
LPTR_DEFINE_ERROR(DegenerateQuad)

// networks
LPTR_DEFINE_ERROR(ShapeMismatch)

// codec
LPTR_DEFINE_ERROR(UnknownGlyph)
LPTR_DEFINE_ERROR(InfeasibleTarget)
LPTR_DEFINE_ERROR(TooLarge)

// data generation
LPTR_DEFINE_ERROR(MissingGlyphFont)
LPTR_DEFINE_ERROR(MalformedRecord)

// training / persistence
LPTR_DEFINE_ERROR(DivergenceGuard)
LPTR_DEFINE_ERROR(VersionMismatch)
LPTR_DEFINE_ERROR(CharsetMismatch)
LPTR_DEFINE_ERROR(CorruptFile)

// evaluation / tooling
LPTR_DEFINE_ERROR(EmptyEvalSet)
LPTR_DEFINE_ERROR(IOError)
LPTR_DEFINE_ERROR(ConfigError)
LPTR_DEFINE_ERROR(MissingInput)
LPTR_DEFINE_ERROR(CheckpointIncompatible)

#undef LPTR_DEFINE_ERROR

}  // namespace lptr
