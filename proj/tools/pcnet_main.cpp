#include "pcnet/cli.hpp"

int main(int argc, char** argv) { return pcnet::cli::cli_main(argc, argv); }
