#pragma once

#include <string_view>

namespace fvslide::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

void set_level(Level level);
Level level();

void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

}  // namespace fvslide::log
