#include "wlclean/cli.hpp"

#include <string>
#include <vector>

int main(int argc, char** argv) {
    return wlclean::cli::run(std::vector<std::string>(argv, argv + argc));
}
