#include "cli.hpp"

int main(int argc, char** argv) { return effdim::cli::run(argc, argv); }
