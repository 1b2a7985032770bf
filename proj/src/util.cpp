#include "cllab/util.hpp"

#include <charconv>
#include <cmath>

#include "cllab/errors.hpp"

namespace cllab {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token, std::size_t offset) {
    if (token == "inf" || token == "+inf") return INFINITY;
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last || token.empty())
        throw ParseError("expected a number, got '" + std::string(token) + "'", offset);
    return value;
}

long long parse_integer(std::string_view token, std::size_t offset) {
    long long value = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size() || token.empty())
        throw ParseError("expected an integer, got '" + std::string(token) + "'", offset);
    return value;
}

std::vector<Token> split_tokens(std::string_view text, char sep, std::size_t offset) {
    std::vector<Token> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back({text.substr(start), offset + start});
            break;
        }
        out.push_back({text.substr(start, pos - start), offset + start});
        start = pos + 1;
    }
    return out;
}

std::vector<double> parse_double_list(std::string_view text, std::size_t offset, char sep) {
    std::vector<double> out;
    for (const auto& tok : split_tokens(text, sep, offset)) out.push_back(parse_double(tok.text, tok.offset));
    return out;
}

}  // namespace cllab
