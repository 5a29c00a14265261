#include "cli.hpp"

int main(int argc, char** argv) { return dissect::cli::run(argc, argv); }
