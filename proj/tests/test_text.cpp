#include <gtest/gtest.h>

#include "hibrids/text.hpp"

using namespace hibrids;
using Tokens = std::vector<std::string>;

TEST(Tokenize, LowercasesAndSplitsEdgePunctuation) {
    EXPECT_EQ(tokenize("The Cat, sat."), (Tokens{"the", "cat", ",", "sat", "."}));
    EXPECT_EQ(tokenize("(U.S.)"), (Tokens{"(", "u.s", ".", ")"}));
    EXPECT_EQ(tokenize("don't"), (Tokens{"don't"}));
}

TEST(Tokenize, KeepsMarkersAtomic) {
    EXPECT_EQ(tokenize("A1 [L_DOWN] Q [QS_SEP] s [SEC-L2] [SEC]"),
              (Tokens{"a1", "[L_DOWN]", "q", "[QS_SEP]", "s", "[SEC-L2]", "[SEC]"}));
    EXPECT_TRUE(is_reserved_marker("[SEC-L12]"));
    EXPECT_FALSE(is_reserved_marker("[SEC-L]"));
    EXPECT_FALSE(is_reserved_marker("[l_down]"));
}

TEST(Tokenize, EmptyAndPunctuationOnly) {
    EXPECT_TRUE(tokenize("   \n\t").empty());
    EXPECT_EQ(tokenize("?!"), (Tokens{"?", "!"}));
}

TEST(Sentences, SplitOnTerminatorPlusSpace) {
    EXPECT_EQ(split_sentences("One. Two? Three!  Four"), (Tokens{"One.", "Two?", "Three!", "Four"}));
    EXPECT_EQ(split_sentences("U.S. rules apply."), (Tokens{"U.S.", "rules apply."}));
    EXPECT_TRUE(split_sentences("").empty());
}

TEST(Words, CountOnlyAlphanumericTokens) {
    EXPECT_EQ(count_words(tokenize("Hello, world 42 -- !")), 3u);
}

TEST(NGrams, CountsOverlapping) {
    const auto c = ngram_counts({"a", "b", "a", "b"}, 2);
    EXPECT_EQ(c.at({"a", "b"}), 2);
    EXPECT_EQ(c.at({"b", "a"}), 1);
    EXPECT_TRUE(ngram_counts({"a"}, 2).empty());
}
