#pragma once

#include <stdexcept>
#include <string>

namespace tfield {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyCloudError : Error {
    EmptyCloudError() : Error("point cloud is empty") {}
};

struct MissingObstaclesError : Error {
    MissingObstaclesError() : Error("scene has no obstacle data") {}
};

struct InsufficientPointsError : Error {
    InsufficientPointsError(std::size_t k, std::size_t n)
        : Error("requested " + std::to_string(k) + " samples from cloud of " +
                std::to_string(n) + " points") {}
};

struct UnknownObjectError : Error {
    explicit UnknownObjectError(const std::string& id)
        : Error("unknown object id: " + id) {}
};

struct SceneTooClutteredError : Error {
    explicit SceneTooClutteredError(int rejections)
        : Error("pose sampling rejected " + std::to_string(rejections) +
                " consecutive candidates") {}
};

struct InvalidInputError : Error {
    using Error::Error;
};

struct DegenerateGradientError : Error {
    DegenerateGradientError() : Error("time-field gradient norm below 1e-12") {}
};

struct NanLossError : Error {
    int epoch;
    int batch;
    NanLossError(int e, int b)
        : Error("non-finite loss at epoch " + std::to_string(e) + ", batch " +
                std::to_string(b)),
          epoch(e), batch(b) {}
};

struct FileError : Error {
    using Error::Error;
};

}  // namespace tfield
