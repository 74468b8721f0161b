#include "cli.hpp"

int main(int argc, char** argv) { return dualview::tools::run_cli(argc, argv); }
