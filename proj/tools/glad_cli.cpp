#include "glad/cli.hpp"

int main(int argc, char** argv) { return glad::cli_main(argc, argv); }
