#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace headgrow {

/// Base error for the whole pipeline. `name()` is the stable machine-readable
/// identifier used in CLI exit messages and ablation failure rows.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(name + ": " + what), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

#define HEADGROW_DEFINE_ERROR(Name)                                     \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(#Name, what) {}  \
    }

// ingest
HEADGROW_DEFINE_ERROR(DegenerateFiducials);
HEADGROW_DEFINE_ERROR(EmptyCluster);
HEADGROW_DEFINE_ERROR(ManifestParseError);
HEADGROW_DEFINE_ERROR(MissingImage);
HEADGROW_DEFINE_ERROR(MissingFrontalCluster);

// synth
HEADGROW_DEFINE_ERROR(EmptyProjection);
HEADGROW_DEFINE_ERROR(IoError);

// photometric
HEADGROW_DEFINE_ERROR(TooFewPhotos);
HEADGROW_DEFINE_ERROR(DegenerateLighting);

// ambiguity
HEADGROW_DEFINE_ERROR(InsufficientOverlap);
HEADGROW_DEFINE_ERROR(RankDeficientNormals);
HEADGROW_DEFINE_ERROR(SingularTransform);

// integrate
HEADGROW_DEFINE_ERROR(NoValidPixels);
HEADGROW_DEFINE_ERROR(SolverDivergence);
HEADGROW_DEFINE_ERROR(EmptyRegion);

// grow
HEADGROW_DEFINE_ERROR(NeighborNotCompleted);

// eval
HEADGROW_DEFINE_ERROR(NoValidOverlap);
HEADGROW_DEFINE_ERROR(DegenerateFit);

#undef HEADGROW_DEFINE_ERROR

}  // namespace headgrow
