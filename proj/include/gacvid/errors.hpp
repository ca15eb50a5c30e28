#pragma once

#include <stdexcept>
#include <string>

namespace gacvid {

// Base class for all library errors. `kind()` returns a stable identifier
// suitable for exit-code mapping and log records.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define GACVID_DEFINE_ERROR(NAME)                                        \
    class NAME : public Error {                                          \
    public:                                                              \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {}     \
    }

GACVID_DEFINE_ERROR(MissingPoint);
GACVID_DEFINE_ERROR(DegeneratePart);
GACVID_DEFINE_ERROR(EmptyLibrary);
GACVID_DEFINE_ERROR(ShapeMismatch);
GACVID_DEFINE_ERROR(InvalidSpec);
GACVID_DEFINE_ERROR(OddLength);
GACVID_DEFINE_ERROR(IoError);
GACVID_DEFINE_ERROR(FormatError);
GACVID_DEFINE_ERROR(ConfigError);
GACVID_DEFINE_ERROR(NonFinite);
GACVID_DEFINE_ERROR(NonFiniteLoss);
GACVID_DEFINE_ERROR(WindowTooShort);
GACVID_DEFINE_ERROR(InsufficientPersons);
GACVID_DEFINE_ERROR(MissingCheckpoint);
GACVID_DEFINE_ERROR(AlignmentError);
GACVID_DEFINE_ERROR(TooFewFrames);

#undef GACVID_DEFINE_ERROR

}  // namespace gacvid
