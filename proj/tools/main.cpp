#include "mvh/harness.hpp"

int main(int argc, char** argv) { return mvh::cli_main(argc, argv); }
