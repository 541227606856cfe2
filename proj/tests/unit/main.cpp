#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

int main(int argc, char** argv) {
  if (!std::getenv("RBA_TEST_LOG")) spdlog::set_level(spdlog::level::off);
  doctest::Context context(argc, argv);
  return context.run();
}
