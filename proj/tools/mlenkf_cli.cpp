#include <iostream>

#include "mlenkf/cli.hpp"

int main(int argc, char** argv) { return mlenkf::dispatch(argc, argv, std::cout, std::cerr); }
