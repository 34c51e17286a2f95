#include <iostream>

#include "protosel/cli.hpp"

int main(int argc, char** argv) { return protosel::run_cli(argc, argv, std::cout, std::cerr); }
