#include "r2s/cli.hpp"

int main(int argc, char** argv) { return r2s::cli::cli_main(argc, argv); }
