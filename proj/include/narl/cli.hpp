#pragma once

#include <ostream>

namespace narl {

/// Entry point of the `narl` tool. Returns 0 on success, 2 on usage or
/// config errors and 1 on runtime errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace narl
