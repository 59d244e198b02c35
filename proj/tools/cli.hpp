#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "stldac/error.hpp"
#include "stldac/json_io.hpp"

namespace stldac::cli {

/// Bad command line or config; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Invocation {
    std::string command;
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = "out";
    std::optional<std::size_t> threads;
};

/// Parses argv and runs the command. Returns the process exit code:
/// 0 success, 1 runtime or model error, 2 usage or config error.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Runs an already-parsed invocation; throws on failure.
void run(const Invocation& inv, std::ostream& log);

/// --threads, then the config's "threads", then STLDAC_THREADS, then 1.
/// Zero means one per hardware thread.
std::size_t resolve_threads(const Invocation& inv, const io::json& config);

}  // namespace stldac::cli
