#include <iostream>

#include "nvform/cli/app.hpp"

int main(int argc, char** argv) { return nvform::cli::run(argc, argv, std::cout, std::cerr); }
