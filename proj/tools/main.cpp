#include <iostream>

#include "obfloc/cli.hpp"

int main(int argc, char** argv) { return obfloc::run_cli(argc, argv, std::cout, std::cerr); }
