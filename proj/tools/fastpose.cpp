#include "fastpose/cli.hpp"

int main(int argc, char** argv) { return fastpose::cli::run(argc, argv); }
