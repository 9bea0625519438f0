#pragma once

#include <stdexcept>
#include <string>

namespace dmdbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DMDBENCH_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

DMDBENCH_DEFINE_ERROR(SingularParameterization);
DMDBENCH_DEFINE_ERROR(DimensionMismatch);
DMDBENCH_DEFINE_ERROR(EmptyData);
DMDBENCH_DEFINE_ERROR(RankDeficient);
DMDBENCH_DEFINE_ERROR(SingularBackwardOperator);
DMDBENCH_DEFINE_ERROR(SquareRootBranchFailure);
DMDBENCH_DEFINE_ERROR(IllConditionedBlock);
DMDBENCH_DEFINE_ERROR(RankExceedsData);
DMDBENCH_DEFINE_ERROR(InvalidArgument);
DMDBENCH_DEFINE_ERROR(GeometryMismatch);

#undef DMDBENCH_DEFINE_ERROR

/// Configuration error carrying the JSON path of the offending field.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& what)
        : Error("SchemaError at " + path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace dmdbench
