#include "cli.hpp"

int main(int argc, char** argv) { return refsplat::cli::run(argc, argv); }
