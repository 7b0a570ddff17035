#include <iostream>

#include "narl/cli.hpp"

int main(int argc, char** argv) { return narl::run_cli(argc, argv, std::cout, std::cerr); }
