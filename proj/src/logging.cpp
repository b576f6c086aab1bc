#include "wellcast/logging.hpp"

#include <cstdlib>
#include <mutex>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace wellcast {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> instance;
  std::call_once(once, [] {
    instance = spdlog::stderr_color_mt("wellcast");
    instance->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    const char* env = std::getenv("WELLCAST_LOG");
    instance->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
  });
  return instance;
}

}  // namespace wellcast
