#include "dwelldos/cli.hpp"

int main(int argc, char** argv) { return dwelldos::cli::run(argc, argv, std::cout, std::cerr); }
