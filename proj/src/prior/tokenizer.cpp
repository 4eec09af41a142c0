#include "melbridge/prior/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

#include "melbridge/core/io.hpp"

namespace melbridge::prior {

std::vector<int> HashTokenizer::encode(const std::string& text) const {
    if (vocab_size < 2) throw std::invalid_argument("tokenizer vocab must be at least 2");
    if (token_seq_len < 1) throw std::invalid_argument("token_seq_len must be positive");

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(token_seq_len));
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        if (static_cast<int>(out.size()) < token_seq_len) {
            const std::uint64_t h = fnv1a64(word.data(), word.size());
            out.push_back(1 + static_cast<int>(h % static_cast<std::uint64_t>(vocab_size - 1)));
        }
        word.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    if (out.empty()) throw std::invalid_argument("cannot tokenize text with no words: \"" + text + "\"");
    out.resize(static_cast<std::size_t>(token_seq_len), 0);
    return out;
}

}  // namespace melbridge::prior
