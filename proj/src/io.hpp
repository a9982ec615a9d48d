#pragma once

#include <filesystem>
#include <fstream>

namespace wlclean::detail {

// Opens for reading; IoError when the file cannot be opened.
std::ifstream open_input(const std::filesystem::path& path);
// Creates parent directories, truncates; IoError when not writable.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace wlclean::detail
