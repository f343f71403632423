#include "cli_app.hpp"

int main(int argc, char** argv) { return sthawkes::cli::run(argc, argv); }
