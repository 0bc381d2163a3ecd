#include "dwlab/cli.hpp"

int main(int argc, char** argv) { return dwlab::cli::run_cli(argc, argv); }
