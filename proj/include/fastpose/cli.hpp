#pragma once

#include <iosfwd>

namespace fastpose::cli {

// Entry point of the `fastpose` tool. Returns 0 on success, 2 on a usage
// error and 1 on a data error; messages go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace fastpose::cli
