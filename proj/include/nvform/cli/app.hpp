#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

namespace nvform::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_numeric_failure = 3;

/// Entry point shared by the `nvform` executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::string_view bytes);

}  // namespace nvform::cli
