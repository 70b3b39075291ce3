#include "bustime/cli.hpp"

int main(int argc, char** argv) { return bustime::cli::run(argc, argv); }
