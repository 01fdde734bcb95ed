#include "dhm/cli.h"

#include <iostream>

int main(int argc, char** argv) { return dhm::run_cli(argc, argv, std::cout, std::cerr); }
