#pragma once

#include <stdexcept>
#include <string>

namespace lyapcert {

// Every failure raised by the library derives from Error so callers (and the
// CLI exit-code mapping) can distinguish numeric failures from config ones.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define LYAPCERT_DEFINE_ERROR(Name, Base)                                          \
    class Name : public Base {                                                     \
    public:                                                                        \
        explicit Name(const std::string& what) : Base(#Name ": " + what) {}        \
    }

class NumericError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

LYAPCERT_DEFINE_ERROR(SingularSystem, NumericError);
LYAPCERT_DEFINE_ERROR(NotStabilizing, NumericError);
LYAPCERT_DEFINE_ERROR(NoConvergence, NumericError);
LYAPCERT_DEFINE_ERROR(NonFiniteDynamics, NumericError);
LYAPCERT_DEFINE_ERROR(NonFiniteLoss, NumericError);
LYAPCERT_DEFINE_ERROR(NotHurwitz, NumericError);
LYAPCERT_DEFINE_ERROR(DegenerateRange, NumericError);

LYAPCERT_DEFINE_ERROR(DimensionMismatch, InputError);
LYAPCERT_DEFINE_ERROR(EmptyBatch, InputError);
LYAPCERT_DEFINE_ERROR(BadAxes, InputError);
LYAPCERT_DEFINE_ERROR(ArchMismatch, InputError);
LYAPCERT_DEFINE_ERROR(ConfigError, InputError);
LYAPCERT_DEFINE_ERROR(MissingArtifact, InputError);

#undef LYAPCERT_DEFINE_ERROR

// Raised when the valid-region shrinking loop runs out of rounds.
class RegionSelectionFailure : public Error {
public:
    RegionSelectionFailure(int rounds, double last_radius)
        : Error("RegionSelectionFailure: no fully valid region after " + std::to_string(rounds) +
                " rounds (last radius " + std::to_string(last_radius) + ")"),
          rounds_(rounds),
          last_radius_(last_radius) {}

    int rounds() const { return rounds_; }
    double last_radius() const { return last_radius_; }

private:
    int rounds_;
    double last_radius_;
};

}  // namespace lyapcert
