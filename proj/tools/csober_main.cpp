#include "csober/cli.hpp"

int main(int argc, char** argv) { return csober::cli_main(argc, argv); }
