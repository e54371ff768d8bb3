#include "astreg/cli/dispatch.hpp"

int main(int argc, char** argv) { return astreg::cli::run(argc, argv); }
