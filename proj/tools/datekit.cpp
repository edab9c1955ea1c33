#include <string>
#include <vector>

#include "datekit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return datekit::cli::run(args);
}
