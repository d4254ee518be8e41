#include "prototsnet/cli.hpp"

int main(int argc, char** argv) { return prototsnet::cli_dispatch(argc, argv); }
