#pragma once

#include <cstdlib>
#include <string>

namespace melbridge {

/// POSIX single-quote escaping; safe for any byte string without NUL.
inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    out += '\'';
    return out;
}

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
        s.replace(pos, from.size(), to);
}

/// Substitutes a {key} placeholder with a shell-quoted value.
inline void substitute_arg(std::string& cmd, const std::string& key, const std::string& value) {
    replace_all(cmd, "{" + key + "}", shell_quote(value));
}

}  // namespace melbridge
