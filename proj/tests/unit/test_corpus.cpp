#include <doctest.h>

#include <filesystem>
#include <set>

#include "stldac/corpus.hpp"
#include "stldac/error.hpp"

using namespace stldac;

namespace {

RawDocument raw(std::string user, std::string id, std::string text) {
    return RawDocument{std::move(user), std::move(id), std::move(text), std::nullopt};
}

Corpus small_corpus(std::size_t users, std::size_t docs_per_user) {
    std::vector<std::string> ids;
    std::vector<std::vector<Document>> docs;
    for (std::size_t u = 0; u < users; ++u) {
        ids.push_back("u" + std::to_string(u));
        std::vector<Document> ds;
        for (std::size_t d = 0; d < docs_per_user; ++d) {
            const std::vector<WordId> toks{static_cast<WordId>(d % 3), static_cast<WordId>((d + u) % 3)};
            ds.push_back(Document::from_tokens(ids.back() + "_" + std::to_string(d), ids.back(), toks));
        }
        docs.push_back(std::move(ds));
    }
    return Corpus(Vocabulary({"a", "b", "c"}), ids, docs);
}

}  // namespace

TEST_CASE("two short documents without filtering") {
    const std::vector<RawDocument> docs{raw("u", "1", "apple banana"), raw("u", "2", "apple cherry")};
    const Corpus c = preprocess(docs, 0.0, {});
    CHECK(c.vocab_size() == 3);
    CHECK(c.total_docs() == 2);
    const auto apple = c.vocabulary().find("apple");
    REQUIRE(apple);
    CHECK(c.doc(0, 0).words.size() == 2);
    CHECK(c.doc(0, 0).words[0] == *apple);
}

TEST_CASE("all tokens removed gives an empty corpus error") {
    const std::vector<RawDocument> docs{raw("u", "1", "The the a")};
    CHECK_THROWS_AS(preprocess(docs, 0.0, {"the", "a"}), CorpusError);
}

TEST_CASE("URLs, stopwords and rare words are removed; one-token documents dropped") {
    const std::vector<RawDocument> docs{raw("u", "1", "Vote NOW https://x.y vote"), raw("u", "2", "vote today"),
                                        raw("v", "3", "the rare vote"), raw("v", "4", "www.site.org today")};
    PreprocessReport rep;
    const Corpus c = preprocess(docs, 0.5, {"the"}, &rep);
    // document frequency threshold ceil(0.5 * 4) = 2 keeps "vote" and "today"
    CHECK(rep.min_doc_count == 2);
    CHECK(c.vocab_size() == 2);
    CHECK(c.vocabulary().find("now") == std::nullopt);
    // doc 3 keeps only "vote", doc 4 only "today": both dropped
    CHECK(c.total_docs() == 2);
    CHECK(rep.dropped_docs == 2);
}

TEST_CASE("tokenizer lowercases and strips punctuation") {
    const auto toks = default_tokenize("Hello, World! It's");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0] == "hello");
    CHECK(toks[1] == "world");
    CHECK(is_url_like("https://a.b"));
    CHECK(is_url_like("www.x.com"));
    CHECK_FALSE(is_url_like("wwf"));
}

TEST_CASE("vocabulary ids do not depend on insertion order") {
    const auto a = Vocabulary::from_unsorted({"b", "c", "a"});
    const auto b = Vocabulary::from_unsorted({"c", "a", "b"});
    CHECK(a == b);
    CHECK(a.token(0) == "a");
    CHECK_THROWS_AS(Vocabulary({"a", "a"}), ValidationError);
}

TEST_CASE("holdout split protocol") {
    const Corpus c = small_corpus(3, 20);
    const auto split = holdout_split(c, 0.25, 10, 5);
    CHECK(split.test.total_docs() == 15);
    CHECK(split.train.total_docs() + split.test.total_docs() == c.total_docs());
    std::set<std::string> ids;
    for (const Corpus* part : {&split.train, &split.test})
        for (std::size_t u = 0; u < part->num_users(); ++u)
            for (const auto& d : part->docs(u)) CHECK(ids.insert(d.doc_id).second);
    CHECK(ids.size() == c.total_docs());

    const auto again = holdout_split(c, 0.25, 10, 5);
    CHECK(again.test == split.test);

    const Corpus few = small_corpus(1, 4);
    const auto kept = holdout_split(few, 0.5, 10, 1);
    CHECK(kept.train.total_docs() == 4);
    CHECK(kept.test_empty);
}

TEST_CASE("corpus JSON round trip and fingerprint") {
    const Corpus c = small_corpus(2, 5);
    const auto text = corpus_to_json_string(c);
    const Corpus back = corpus_from_json_string(text);
    CHECK(back == c);
    CHECK(corpus_fingerprint(back) == corpus_fingerprint(c));
    CHECK(corpus_fingerprint(small_corpus(2, 6)) != corpus_fingerprint(c));
    CHECK_THROWS_AS(corpus_from_json_string("{not json"), CorruptFileError);
}

TEST_CASE("rendered tokens preprocess back to the same corpus") {
    const std::vector<RawDocument> docs{raw("u", "1", "apple banana apple"), raw("v", "2", "banana cherry")};
    const Corpus c = preprocess(docs, 0.0, {});
    const Corpus again = preprocess(render_tokens(c), 0.0, {});
    CHECK(again == c);
}
