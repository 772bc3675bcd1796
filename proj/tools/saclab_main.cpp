#include <iostream>

#include "saclab/cli.hpp"

int main(int argc, char** argv) { return saclab::run_cli(argc, argv, std::cout, std::cerr); }
