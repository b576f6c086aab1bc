#pragma once

namespace wellcast::cli {

/// Entry point for the wellcast executable. Returns 0 on success, 1 when a
/// stage fails and 2 on usage errors.
int run(int argc, char** argv);

}  // namespace wellcast::cli
