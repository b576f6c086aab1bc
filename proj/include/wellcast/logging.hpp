#pragma once

#include <memory>

namespace spdlog {
class logger;
}

namespace wellcast {

/// Shared library logger. Level comes from WELLCAST_LOG (trace, debug, info,
/// warn, error, off); default is warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace wellcast
