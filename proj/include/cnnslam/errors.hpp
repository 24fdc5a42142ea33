#pragma once

#include <stdexcept>
#include <string>

namespace cnnslam {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonPositiveDepth : Error {
    explicit NonPositiveDepth(const std::string& msg = "depth must be positive") : Error(msg) {}
};

struct NonPositiveFocal : Error {
    explicit NonPositiveFocal(const std::string& msg = "focal length must be positive") : Error(msg) {}
};

struct OutOfBounds : Error {
    explicit OutOfBounds(const std::string& msg = "coordinate outside image domain") : Error(msg) {}
};

struct MissingFile : Error {
    explicit MissingFile(const std::string& path) : Error("missing file: " + path) {}
};

struct MalformedLine : Error {
    MalformedLine(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    int line_number;
};

struct UnsupportedFormat : Error {
    explicit UnsupportedFormat(const std::string& msg) : Error("unsupported format: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct MissingPrediction : Error {
    explicit MissingPrediction(const std::string& msg) : Error("missing prediction: " + msg) {}
};

struct InvalidPrediction : Error {
    explicit InvalidPrediction(const std::string& msg) : Error("invalid prediction: " + msg) {}
};

struct TrackingLost : Error {
    explicit TrackingLost(const std::string& msg) : Error("tracking lost: " + msg) {}
};

struct NotConnected : Error {
    explicit NotConnected(const std::string& msg = "pose graph not connected") : Error(msg) {}
};

struct SingularSystem : Error {
    explicit SingularSystem(const std::string& msg = "singular normal equations") : Error(msg) {}
};

struct InsufficientPairs : Error {
    explicit InsufficientPairs(const std::string& msg = "need at least 2 associated pose pairs") : Error(msg) {}
};

struct NoGroundTruth : Error {
    explicit NoGroundTruth(const std::string& msg = "no ground-truth depth available") : Error(msg) {}
};

struct UnlabeledElement : Error {
    explicit UnlabeledElement(const std::string& msg = "element has no label observations") : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

}  // namespace cnnslam
