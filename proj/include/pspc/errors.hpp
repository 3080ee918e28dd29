#ifndef PSPC_ERRORS_HPP
#define PSPC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pspc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PSPC_DEFINE_ERROR(Name)            \
    class Name : public Error {            \
    public:                                \
        using Error::Error;                \
    }

PSPC_DEFINE_ERROR(FormatError);
PSPC_DEFINE_ERROR(ShapeMismatch);
PSPC_DEFINE_ERROR(ConfigError);
PSPC_DEFINE_ERROR(DomainError);
PSPC_DEFINE_ERROR(RangeError);
PSPC_DEFINE_ERROR(EmptyDataset);
PSPC_DEFINE_ERROR(DegenerateHeatmap);
PSPC_DEFINE_ERROR(UncoveredPixel);
PSPC_DEFINE_ERROR(MissingData);

#undef PSPC_DEFINE_ERROR

namespace detail {

inline void require_positive_time(double t, const char* where) {
    if (!(t > 0.0)) {
        throw DomainError(std::string(where) + ": t must be positive, got " + std::to_string(t));
    }
}

}  // namespace detail

}  // namespace pspc

#endif
