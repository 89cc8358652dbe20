#include "apsde_cli.hpp"

int main(int argc, char** argv) { return apsde::cli::run_cli(argc, argv); }
