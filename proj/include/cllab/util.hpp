#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cllab {

// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double x);

// Parses a full double token; `offset` is the token's position inside the enclosing descriptor.
double parse_double(std::string_view token, std::size_t offset);
long long parse_integer(std::string_view token, std::size_t offset);

// Comma separated doubles, e.g. "1,2.5,-3".
std::vector<double> parse_double_list(std::string_view text, std::size_t offset, char sep = ',');

struct Token {
    std::string_view text;
    std::size_t offset;
};

std::vector<Token> split_tokens(std::string_view text, char sep, std::size_t offset = 0);

}  // namespace cllab
