#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return s4drc::cli::run(argc, argv, std::cout, std::cerr); }
