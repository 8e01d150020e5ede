#include <iostream>

#include "edgeshield/cli.hpp"

int main(int argc, char** argv) { return edgeshield::run_cli(argc, argv, std::cout, std::cerr); }
