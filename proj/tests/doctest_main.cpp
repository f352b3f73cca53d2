#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "exposurelab/common.hpp"

int main(int argc, char** argv) {
    exposurelab::set_warnings_enabled(false);
    doctest::Context context;
    context.applyCommandLine(argc, argv);
    return context.run();
}
