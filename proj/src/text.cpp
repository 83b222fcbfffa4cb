#include "hibrids/text.hpp"

#include <algorithm>
#include <cctype>

namespace hibrids {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

bool is_sec_level_marker(std::string_view token) {
    constexpr std::string_view prefix = "[SEC-L";
    if (token.size() <= prefix.size() + 1 || token.substr(0, prefix.size()) != prefix ||
        token.back() != ']') {
        return false;
    }
    auto digits = token.substr(prefix.size(), token.size() - prefix.size() - 1);
    return std::all_of(digits.begin(), digits.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

}  // namespace

bool is_reserved_marker(std::string_view token) {
    return token == kLevelDown || token == kLevelUp || token == kLevelSame || token == kQsSep ||
           token == kSecMarker || is_sec_level_marker(token);
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& chunk : split_whitespace(text)) {
        if (is_reserved_marker(chunk)) {
            out.push_back(chunk);
            continue;
        }
        std::size_t lo = 0;
        std::size_t hi = chunk.size();
        while (lo < hi && is_punct(chunk[lo])) out.emplace_back(1, chunk[lo++]);
        std::size_t trail = hi;
        while (trail > lo && is_punct(chunk[trail - 1])) --trail;
        if (trail > lo) {
            std::string core = chunk.substr(lo, trail - lo);
            for (auto& c : core) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            out.push_back(std::move(core));
        }
        for (std::size_t k = trail; k < hi; ++k) out.emplace_back(1, chunk[k]);
    }
    return out;
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        auto piece = text.substr(start, end - start);
        auto b = piece.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return;
        auto e = piece.find_last_not_of(" \t\r\n");
        out.emplace_back(piece.substr(b, e - b + 1));
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() && is_space(text[i + 1])) {
            flush(i + 1);
            start = i + 1;
        }
    }
    flush(text.size());
    return out;
}

std::size_t count_words(const std::vector<std::string>& tokens) {
    return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), [](const std::string& t) {
        return std::any_of(t.begin(), t.end(),
                           [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; });
    }));
}

std::map<NGram, int> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    std::map<NGram, int> counts;
    if (n == 0 || tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace hibrids
