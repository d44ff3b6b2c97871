#pragma once

#include <stdexcept>
#include <string>

namespace gflc {

// Process exit codes used by the CLI; one per failure stage.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    model = 3,
    recursion = 4,
    search = 5,
    simulation = 6,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const { return code_; }

private:
    ExitCode code_;
};

// Bad or missing configuration input (param files, CLI values).
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

// Circuit reduction / equilibrium failures (degenerate network, no SEP).
struct ModelError : Error {
    explicit ModelError(const std::string& what) : Error(ExitCode::model, what) {}
};

// Energy-function construction failures (non-Hurwitz linearization, resonant
// or singular degree solve).
struct RecursionError : Error {
    explicit RecursionError(const std::string& what) : Error(ExitCode::recursion, what) {}
};

// Attraction-domain search failures.
struct SearchError : Error {
    explicit SearchError(const std::string& what) : Error(ExitCode::search, what) {}
};

// Time-domain simulation failures.
struct SimulationError : Error {
    explicit SimulationError(const std::string& what) : Error(ExitCode::simulation, what) {}
};

}  // namespace gflc
