#include "nonhyp/cli.hpp"

int main(int argc, char** argv) { return nonhyp::cli::main(argc, argv); }
