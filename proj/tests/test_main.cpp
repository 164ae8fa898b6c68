#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "guard/numerics.hpp"

int main(int argc, char** argv) {
  guard::num::keep_large_allocations_on_heap();
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  return context.run();
}
