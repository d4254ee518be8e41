#pragma once

#include <iosfwd>

namespace prototsnet {

// Runs one `prototsnet` subcommand. Returns 0 on success, 2 on a usage error
// (help goes to `err`), 1 on a runtime error.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace prototsnet
