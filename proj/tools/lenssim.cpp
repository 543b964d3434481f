#include "lenssim/cli.hpp"

int main(int argc, char** argv) { return lenssim::run_pipeline(argc, argv); }
