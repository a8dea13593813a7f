#include <iostream>

#include "nfem/cli.hpp"

int main(int argc, char** argv) { return nfem::cli::main_entry(argc, argv, std::cout, std::cerr); }
