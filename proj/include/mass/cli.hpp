#pragma once

namespace mass {

/// Runs one command. Returns 0 on success, 1 on runtime failure, 2 on usage error.
int dispatch(int argc, const char* const* argv);

}  // namespace mass
