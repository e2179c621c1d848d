#include "dcr/cli.hpp"

int main(int argc, char** argv) { return dcr::cli::run(argc, argv); }
