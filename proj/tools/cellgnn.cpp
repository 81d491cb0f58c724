#include "cli.hpp"

int main(int argc, char** argv) { return cellgnn::cli::run(argc, argv); }
