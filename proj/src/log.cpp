#include "roed/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

#include "roed/errors.hpp"

namespace roed::log {
namespace {

std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;

const char* label(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: break;
  }
  return "off";
}

}  // namespace

Level level() { return g_level.load(); }
void set_level(Level level) { g_level = level; }

Level level_from_string(const std::string& name) {
  for (Level l : {Level::kDebug, Level::kInfo, Level::kWarn, Level::kError, Level::kOff}) {
    if (name == label(l)) return l;
  }
  throw InvalidArgument("unknown log level '" + name + "'");
}

void write(Level level, std::string_view message) {
  if (level < g_level.load() || level == Level::kOff) return;
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[roed %s] %.*s\n", label(level), static_cast<int>(message.size()),
               message.data());
}

}  // namespace roed::log
