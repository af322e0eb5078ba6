#include "kept/cli.hpp"

int main(int argc, char** argv) { return kept::cli_dispatch(argc, argv); }
