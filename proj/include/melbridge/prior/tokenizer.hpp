#pragma once

#include <string>
#include <vector>

namespace melbridge::prior {

/// Fixed-length hashing tokenizer: lowercased words map to stable ids in
/// [1, vocab_size); id 0 is padding. No learned vocabulary, so any label
/// text tokenizes the same way on every machine and run.
struct HashTokenizer {
    int vocab_size = 1024;
    int token_seq_len = 16;

    /// Throws on text with no tokens; truncates past token_seq_len.
    std::vector<int> encode(const std::string& text) const;
};

}  // namespace melbridge::prior
