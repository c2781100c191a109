#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aop {

// Shared tokenizer for the sparse index, query keyword derivation and the
// bag-of-words test embedder: lowercased word split, no stemming, no
// stopwords. ASCII alphanumeric runs form tokens; non-ASCII bytes are kept
// verbatim as word characters so multi-byte scripts stay intact.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace aop
