#include <cftoken/cli.hpp>

int main(int argc, char** argv) { return cftoken::cli::run(argc, argv); }
