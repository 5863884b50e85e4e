#include <iostream>

#include "rnade/commands.hpp"

int main(int argc, char** argv) { return rnade::run_cli(argc, argv, std::cout, std::cerr); }
