#include <iostream>

#include "opsplit/cli.hpp"

int main(int argc, char** argv) { return opsplit::cli_main(argc, argv, std::cout, std::cerr); }
