#pragma once

// Small helpers shared by the line-oriented file readers.

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace cola {

/// Throws MissingArtifact naming the path when it does not exist.
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

std::vector<std::string> split_tabs(std::string_view line);
std::string trim(std::string_view s);
bool is_blank(std::string_view s);

}  // namespace cola
