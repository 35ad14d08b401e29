#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace srlf {

// Lowercases and splits on any non-alphanumeric byte. Shared by the BM25
// ranker and the latent oracle so both sides see the same token stream.
std::vector<std::string> tokenize(std::string_view text);

std::set<std::string> token_set(std::string_view text);

std::string to_lower(std::string_view text);

std::string trim(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Collapses newlines/tabs to single spaces so multi-line texts can be
// embedded into one-line prompt blocks and JSONL records.
std::string one_line(std::string_view text);

std::string read_text_file(const std::string& path);

void write_text_file(const std::string& path, std::string_view content);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace srlf
