#include <iostream>

#include "hardneg/cli.hpp"

int main(int argc, char** argv) { return hardneg::cli_dispatch(argc, argv, std::cout, std::cerr); }
