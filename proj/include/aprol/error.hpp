#pragma once

#include <stdexcept>
#include <string>

namespace aprol {

    /// Base of every error thrown by the library.
    struct Error : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    struct InvalidInput : Error {
        using Error::Error;
    };

    struct EmptyRepertoire : Error {
        using Error::Error;
    };

    /// Malformed repertoire/map file. `line` is 1-based, 0 when not tied to a line.
    struct ParseError : Error {
        ParseError(std::size_t line, const std::string& what)
            : Error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
        std::size_t line;
    };

    struct VersionError : Error {
        using Error::Error;
    };

    struct NumericalError : Error {
        using Error::Error;
    };

    struct EvaluationError : Error {
        using Error::Error;
    };

    struct GenerationError : Error {
        using Error::Error;
    };

    struct SelectionError : Error {
        using Error::Error;
    };

    struct NoPathError : Error {
        using Error::Error;
    };

} // namespace aprol
