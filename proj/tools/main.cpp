#include "handvote/cli.hpp"

int main(int argc, char** argv) { return handvote::cli_main(argc, argv); }
