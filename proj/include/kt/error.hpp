#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kt {

// Error classes map one-to-one onto CLI exit codes (see ktpipe --help).
enum class ErrorClass {
    usage = 2,
    missing_input = 3,
    format = 4,
    geometry = 5,
    solver = 6,
    parameter = 7,
    internal = 8,
};

inline const char* error_class_name(ErrorClass c) {
    switch (c) {
        case ErrorClass::usage: return "usage_error";
        case ErrorClass::missing_input: return "missing_input";
        case ErrorClass::format: return "format_error";
        case ErrorClass::geometry: return "geometry_error";
        case ErrorClass::solver: return "solver_error";
        case ErrorClass::parameter: return "parameter_error";
        case ErrorClass::internal: return "internal_error";
    }
    return "internal_error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string msg)
        : std::runtime_error(std::move(msg)), cls_(cls) {}
    ErrorClass cls() const noexcept { return cls_; }
    const char* class_name() const noexcept { return error_class_name(cls_); }

private:
    ErrorClass cls_;
};

struct ParamError : Error {
    explicit ParamError(std::string m) : Error(ErrorClass::parameter, std::move(m)) {}
};

struct GeometryError : Error {
    explicit GeometryError(std::string m) : Error(ErrorClass::geometry, std::move(m)) {}
};

struct FormatError : Error {
    explicit FormatError(std::string m) : Error(ErrorClass::format, std::move(m)) {}
};

struct IoError : Error {
    explicit IoError(std::string m) : Error(ErrorClass::missing_input, std::move(m)) {}
};

// Iterative solve failed; carries the residual reached and the iteration count.
struct SolverError : Error {
    SolverError(std::string m, double residual, int iters)
        : Error(ErrorClass::solver, std::move(m)), final_residual(residual), iterations(iters) {}
    double final_residual;
    int iterations;
};

struct InternalError : Error {
    explicit InternalError(std::string m) : Error(ErrorClass::internal, std::move(m)) {}
};

}  // namespace kt
