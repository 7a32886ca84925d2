#include <iostream>

#include "hfn/cli.hpp"

int main(int argc, char** argv) { return hfn::cli::run(argc, argv, std::cout, std::cerr); }
