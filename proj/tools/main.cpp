#include "cli.hpp"

int main(int argc, char** argv) { return excite::cli::run(argc, argv); }
