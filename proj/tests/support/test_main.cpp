#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "adafuse/runtime.hpp"

int main(int argc, char** argv) {
  adafuse::retain_heap_memory();
  doctest::Context context(argc, argv);
  return context.run();
}
