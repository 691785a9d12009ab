// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "evcap/stemmer.hpp"
#include "evcap/text.hpp"

using namespace evcap;

static TokenSeq wrapped(std::initializer_list<const char*> toks) {
    TokenSeq out{kSosToken};
    for (const char* t : toks) out.push_back(t);
    out.push_back(kEosToken);
    return out;
}

TEST_CASE("normalization lowercases and strips punctuation", "[text]") {
    REQUIRE(normalize_caption("A Dog barks!") == wrapped({"a", "dog", "barks"}));
}

TEST_CASE("empty caption normalizes to bare markers", "[text]") {
    REQUIRE(normalize_caption("") == wrapped({}));
    REQUIRE(normalize_caption("   \t ") == wrapped({}));
}

TEST_CASE("normalization matches the reference fixtures", "[text]") {
    // frozen from an independent reference normalizer over the same rules
    REQUIRE(normalize_caption("It's raining \xE2\x80\x94 heavily.") ==
            wrapped({"its", "raining", "heavily"}));
    REQUIRE(normalize_caption(
                "Someone's well-made \xE2\x80\x9C"
                "boat, engine\xE2\x80\x9D hums\xE2\x80\xA6") ==
            wrapped({"someones", "wellmade", "boat", "engine", "hums"}));
    REQUIRE(normalize_caption("a  b\tc\nd") == wrapped({"a", "b", "c", "d"}));
    REQUIRE(normalize_caption("?!\xE2\x80\x94\xE2\x80\xA6") == wrapped({}));
    REQUIRE(normalize_caption("water; running, over rocks (and pebbles)") ==
            wrapped({"water", "running", "over", "rocks", "and", "pebbles"}));
    REQUIRE(normalize_caption("BIRDS chirp-CHIRP loudly") ==
            wrapped({"birds", "chirpchirp", "loudly"}));
}

TEST_CASE("normalization is idempotent on its own output", "[text]") {
    const char* fixtures[] = {"A Dog barks!", "It's raining \xE2\x80\x94 heavily.",
                              "water; running, over rocks (and pebbles)",
                              "BIRDS chirp-CHIRP loudly"};
    for (const char* raw : fixtures) {
        TokenSeq once = normalize_caption(raw);
        TokenSeq again = normalize_caption(join_tokens(strip_markers(once)));
        REQUIRE(again == once);
    }
}

TEST_CASE("malformed utf8 is rejected", "[text]") {
    REQUIRE_THROWS_AS(normalize_caption("abc\xFF"), ValidationError);
    REQUIRE_THROWS_AS(normalize_caption("\xC3"), ValidationError);
    REQUIRE_THROWS_AS(normalize_caption("\xE2\x80"), ValidationError);
}

TEST_CASE("vocabulary reserves four ids and orders by first appearance", "[text]") {
    Vocabulary v = Vocabulary::build({wrapped({"a", "a", "b"})});
    REQUIRE(v.size() == 6);
    REQUIRE(v.decode(kPadId) == kPadToken);
    REQUIRE(v.decode(kSosId) == kSosToken);
    REQUIRE(v.decode(kEosId) == kEosToken);
    REQUIRE(v.decode(kUnkId) == kUnkToken);
    REQUIRE(v.encode(std::string("a")) == 4);
    REQUIRE(v.encode(std::string("b")) == 5);
}

TEST_CASE("vocabulary is idempotent over repeated captions", "[text]") {
    Vocabulary v1 = Vocabulary::build({wrapped({"a", "b"})});
    Vocabulary v2 = Vocabulary::build({wrapped({"a", "b"}), wrapped({"b", "a"})});
    REQUIRE(v1.tokens() == v2.tokens());
}

TEST_CASE("vocabulary rejects an empty corpus", "[text]") {
    REQUIRE_THROWS_AS(Vocabulary::build({}), std::invalid_argument);
}

TEST_CASE("unknown tokens encode to <unk> and round-trip otherwise", "[text]") {
    Vocabulary v = Vocabulary::build({wrapped({"dog", "barks"})});
    REQUIRE(v.encode(std::string("zebra")) == kUnkId);
    for (const auto& tok : v.tokens()) REQUIRE(v.decode(v.encode(tok)) == tok);
    REQUIRE_THROWS_AS(v.decode(999), std::invalid_argument);
}

TEST_CASE("vocabulary serializes one token per line and loads back", "[text]") {
    Vocabulary v = Vocabulary::build({wrapped({"dog", "barks"})});
    REQUIRE(v.serialize() == "<pad>\n<sos>\n<eos>\n<unk>\ndog\nbarks\n");
    auto path = std::filesystem::temp_directory_path() / "evcap_vocab_test.txt";
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    REQUIRE(loaded.tokens() == v.tokens());
    std::filesystem::remove(path);
}

TEST_CASE("vocabulary load validates reserved prefix and duplicates", "[text]") {
    auto path = std::filesystem::temp_directory_path() / "evcap_vocab_bad.txt";
    write_file_atomic(path, std::string("<pad>\n<sos>\n<eos>\ndog\n"));
    REQUIRE_THROWS_AS(Vocabulary::load(path), FormatError);
    write_file_atomic(path, std::string("<pad>\n<sos>\n<eos>\n<unk>\ndog\ndog\n"));
    REQUIRE_THROWS_AS(Vocabulary::load(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("partial caption pairs follow the teacher-forcing expansion", "[text]") {
    TokenSeq seq = wrapped({"a", "dog"});
    auto pairs = partial_caption_pairs(seq);
    REQUIRE(pairs.size() == 3);
    REQUIRE(pairs[0].first == TokenSeq{kSosToken});
    REQUIRE(pairs[0].second == "a");
    REQUIRE(pairs[1].first == TokenSeq{kSosToken, "a"});
    REQUIRE(pairs[1].second == "dog");
    REQUIRE(pairs[2].first == TokenSeq{kSosToken, "a", "dog"});
    REQUIRE(pairs[2].second == kEosToken);
}

TEST_CASE("minimal caption yields a single pair", "[text]") {
    auto pairs = partial_caption_pairs(wrapped({}));
    REQUIRE(pairs.size() == 1);
    REQUIRE(pairs[0].first == TokenSeq{kSosToken});
    REQUIRE(pairs[0].second == kEosToken);
}

TEST_CASE("partial pairs reject sequences shorter than two", "[text]") {
    REQUIRE_THROWS_AS(partial_caption_pairs(TokenSeq{kSosToken}), std::invalid_argument);
}

TEST_CASE("pair prefixes are strictly nested prefixes of the caption", "[text]") {
    TokenSeq seq = wrapped({"rain", "falls", "on", "roofs"});
    auto pairs = partial_caption_pairs(seq);
    REQUIRE(pairs.size() == seq.size() - 1);
    for (size_t i = 0; i < pairs.size(); ++i) {
        REQUIRE(pairs[i].first.size() == i + 1);
        for (size_t j = 0; j < pairs[i].first.size(); ++j)
            REQUIRE(pairs[i].first[j] == seq[j]);
        REQUIRE(pairs[i].second == seq[i + 1]);
    }
}

TEST_CASE("porter stems match the reference oracle", "[stemmer]") {
    // frozen output of an independent Porter implementation
    const std::pair<const char*, const char*> fixtures[] = {
        {"caresses", "caress"}, {"ponies", "poni"},     {"ties", "ti"},
        {"caress", "caress"},   {"cats", "cat"},        {"feed", "feed"},
        {"agreed", "agre"},     {"plastered", "plaster"}, {"bled", "bled"},
        {"motoring", "motor"},  {"sing", "sing"},       {"conflated", "conflat"},
        {"troubled", "troubl"}, {"sized", "size"},      {"hopping", "hop"},
        {"tanned", "tan"},      {"falling", "fall"},    {"hissing", "hiss"},
        {"fizzed", "fizz"},     {"failing", "fail"},    {"filing", "file"},
        {"happy", "happi"},     {"sky", "sky"},         {"relational", "relat"},
        {"conditional", "condit"}, {"rational", "ration"}, {"valenci", "valenc"},
        {"hesitanci", "hesit"}, {"digitizer", "digit"}, {"conformabli", "conform"},
        {"radicalli", "radic"}, {"differentli", "differ"}, {"vileli", "vile"},
        {"analogousli", "analog"}, {"vietnamization", "vietnam"},
        {"predication", "predic"}, {"operator", "oper"}, {"feudalism", "feudal"},
        {"decisiveness", "decis"}, {"hopefulness", "hope"}, {"callousness", "callous"},
        {"formaliti", "formal"}, {"sensitiviti", "sensit"}, {"sensibiliti", "sensibl"},
        {"triplicate", "triplic"}, {"formative", "form"}, {"formalize", "formal"},
        {"electriciti", "electr"}, {"electrical", "electr"}, {"hopeful", "hope"},
        {"goodness", "good"},   {"revival", "reviv"},   {"allowance", "allow"},
        {"inference", "infer"}, {"airliner", "airlin"}, {"gyroscopic", "gyroscop"},
        {"adjustable", "adjust"}, {"defensible", "defens"}, {"irritant", "irrit"},
        {"replacement", "replac"}, {"adjustment", "adjust"}, {"dependent", "depend"},
        {"adoption", "adopt"},  {"homologou", "homolog"}, {"communism", "commun"},
        {"activate", "activ"},  {"angulariti", "angular"}, {"homologous", "homolog"},
        {"effective", "effect"}, {"bowdlerize", "bowdler"}, {"probate", "probat"},
        {"rate", "rate"},       {"cease", "ceas"},      {"controll", "control"},
        {"roll", "roll"},       {"plays", "plai"},      {"played", "plai"},
        {"playing", "plai"},    {"barking", "bark"},    {"barks", "bark"},
        {"birds", "bird"},      {"singing", "sing"},    {"loudly", "loudli"},
        {"quietly", "quietli"}, {"running", "run"},     {"rumbling", "rumbl"},
        {"engines", "engin"},   {"water", "water"},     {"waves", "wave"},
        {"splashing", "splash"}, {"people", "peopl"},   {"talking", "talk"},
        {"speaking", "speak"},  {"music", "music"},     {"playing41", "playing41"},
    };
    for (const auto& [word, expect] : fixtures) {
        CAPTURE(word);
        REQUIRE(porter_stem(word) == expect);
    }
}

TEST_CASE("stemmer passes short words through and lowercases", "[stemmer]") {
    REQUIRE(porter_stem("a") == "a");
    REQUIRE(porter_stem("by") == "by");
    REQUIRE(porter_stem("DOG") == "dog");
    REQUIRE(porter_stem("") == "");
}
