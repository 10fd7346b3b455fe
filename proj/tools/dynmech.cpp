#include <dynmech/cli.hpp>

int main(int argc, char** argv) { return dynmech::cli::cli_main(argc, argv); }
