#include <iostream>

#include "mpopf/cli.hpp"

int main(int argc, char** argv) { return mpopf::cli::main(argc, argv, std::cout, std::cerr); }
