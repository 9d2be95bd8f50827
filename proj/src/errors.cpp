#include "fesense/errors.hpp"

#include <cstdio>

namespace fesense {

namespace {
void default_handler(const std::string& message) {
  std::fprintf(stderr, "warning: %s\n", message.c_str());
}
warning_handler g_handler = default_handler;
}  // namespace

warning_handler set_warning_handler(warning_handler h) {
  warning_handler old = g_handler;
  g_handler = h ? h : default_handler;
  return old;
}

void warn(const std::string& message) { g_handler(message); }

}  // namespace fesense
