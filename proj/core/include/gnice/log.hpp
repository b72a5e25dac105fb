#pragma once

#include <string_view>

namespace gnice {

enum class LogLevel { Debug = 0, Info = 1, Warning = 2, Error = 3, Off = 4 };

/// Messages below the threshold are dropped. Default: Info.
void set_log_level(LogLevel level);
LogLevel log_level();

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::Info, m); }
inline void log_warning(std::string_view m) { log(LogLevel::Warning, m); }
inline void log_debug(std::string_view m) { log(LogLevel::Debug, m); }

}  // namespace gnice
