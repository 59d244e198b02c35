#include "stldac/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stldac/error.hpp"
#include "stldac/rng.hpp"

namespace stldac {

// Vocabulary --------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw ValidationError("vocabulary contains an empty token");
        if (!index_.emplace(tokens_[i], static_cast<WordId>(i)).second)
            throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::from_unsorted(std::vector<std::string> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return Vocabulary(std::move(tokens));
}

std::optional<WordId> Vocabulary::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// Document ----------------------------------------------------------------------

long Document::length() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0L); }

Document Document::from_tokens(std::string doc_id, std::string user_id, std::span<const WordId> tokens) {
    std::map<WordId, long> counts;
    for (WordId w : tokens) ++counts[w];
    return from_counts(std::move(doc_id), std::move(user_id), counts);
}

Document Document::from_counts(std::string doc_id, std::string user_id, const std::map<WordId, long>& counts) {
    Document doc;
    doc.doc_id = std::move(doc_id);
    doc.user_id = std::move(user_id);
    for (const auto& [w, c] : counts) {
        if (c <= 0) continue;
        doc.words.push_back(w);
        doc.counts.push_back(c);
    }
    return doc;
}

// Corpus ------------------------------------------------------------------------

Corpus::Corpus(Vocabulary vocabulary, std::vector<std::string> users, std::vector<std::vector<Document>> docs)
    : vocabulary_(std::move(vocabulary)), users_(std::move(users)), docs_(std::move(docs)) {
    if (users_.size() != docs_.size()) throw ValidationError("corpus: users and document lists differ in length");
    offsets_.reserve(users_.size());
    const std::size_t V = vocabulary_.size();
    for (std::size_t u = 0; u < users_.size(); ++u) {
        if (!user_index_.emplace(users_[u], u).second) throw ValidationError("corpus: duplicate user '" + users_[u] + "'");
        if (docs_[u].empty()) throw ValidationError("corpus: user '" + users_[u] + "' has no documents");
        offsets_.push_back(total_docs_);
        for (const Document& doc : docs_[u]) {
            if (doc.user_id != users_[u])
                throw ValidationError("corpus: document '" + doc.doc_id + "' filed under the wrong user");
            if (doc.words.size() != doc.counts.size())
                throw ValidationError("corpus: document '" + doc.doc_id + "' has mismatched word/count lists");
            for (std::size_t i = 0; i < doc.words.size(); ++i) {
                if (doc.words[i] >= V) throw ValidationError("corpus: word id out of range in '" + doc.doc_id + "'");
                if (doc.counts[i] < 1) throw ValidationError("corpus: nonpositive count in '" + doc.doc_id + "'");
                if (i > 0 && doc.words[i] <= doc.words[i - 1])
                    throw ValidationError("corpus: unsorted or repeated word ids in '" + doc.doc_id + "'");
            }
        }
        total_docs_ += docs_[u].size();
    }
}

std::optional<std::size_t> Corpus::find_user(const std::string& user_id) const {
    auto it = user_index_.find(user_id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
}

long Corpus::total_tokens() const {
    long total = 0;
    for (const auto& user_docs : docs_)
        for (const Document& doc : user_docs) total += doc.length();
    return total;
}

// Preprocessing -----------------------------------------------------------------

std::string normalize_token(const std::string& token) {
    std::string out;
    out.reserve(token.size());
    for (char ch : token) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128) {
            if (std::ispunct(c) || std::isspace(c)) continue;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            out.push_back(ch);
        }
    }
    return out;
}

std::vector<std::string> default_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string raw;
    while (in >> raw) {
        std::string tok = normalize_token(raw);
        if (!tok.empty()) tokens.push_back(std::move(tok));
    }
    return tokens;
}

bool is_url_like(const std::string& token) {
    return token.rfind("http", 0) == 0 || token.rfind("www", 0) == 0;
}

namespace {

using TokenCounts = std::map<std::string, long>;

TokenCounts tokenize_record(const RawDocument& raw, const Tokenizer& tokenizer) {
    TokenCounts counts;
    if (raw.token_counts) {
        for (const auto& [tok, c] : *raw.token_counts) {
            if (c <= 0) continue;
            std::string norm = normalize_token(tok);
            if (!norm.empty()) counts[norm] += c;
        }
    } else {
        for (std::string& tok : tokenizer(raw.text)) {
            // injected tokenizers still get lowercased
            for (char& ch : tok)
                if (static_cast<unsigned char>(ch) < 128) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (!tok.empty()) ++counts[tok];
        }
    }
    return counts;
}

}  // namespace

Corpus preprocess(std::span<const RawDocument> raw_docs, double min_doc_frac,
                  const std::unordered_set<std::string>& stopwords, PreprocessReport* report,
                  const Tokenizer& tokenizer) {
    if (!(min_doc_frac >= 0.0 && min_doc_frac < 1.0)) throw DomainError("min_doc_frac must lie in [0, 1)");

    std::unordered_set<std::string> stops;
    for (const std::string& s : stopwords) stops.insert(normalize_token(s));

    PreprocessReport rep;
    rep.raw_docs = raw_docs.size();

    // lowercase + stopword/URL removal
    std::vector<TokenCounts> docs;
    docs.reserve(raw_docs.size());
    std::map<std::string, long> doc_freq;
    for (const RawDocument& raw : raw_docs) {
        TokenCounts counts = tokenize_record(raw, tokenizer);
        for (auto it = counts.begin(); it != counts.end();) {
            if (stops.contains(it->first) || is_url_like(it->first)) {
                rep.stop_or_url_removed += static_cast<std::size_t>(it->second);
                it = counts.erase(it);
            } else {
                ++doc_freq[it->first];
                ++it;
            }
        }
        docs.push_back(std::move(counts));
    }

    // rare-word removal by document frequency
    rep.min_doc_count = static_cast<long>(std::ceil(min_doc_frac * static_cast<double>(raw_docs.size())));
    std::unordered_set<std::string> rare;
    for (const auto& [tok, df] : doc_freq)
        if (df < rep.min_doc_count) rare.insert(tok);
    rep.rare_tokens_removed = rare.size();

    // short-document drop
    std::vector<std::size_t> kept;
    std::vector<std::string> surviving_tokens;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        long length = 0;
        for (auto it = docs[i].begin(); it != docs[i].end();) {
            if (rare.contains(it->first)) {
                it = docs[i].erase(it);
            } else {
                length += it->second;
                ++it;
            }
        }
        if (length <= 1) {
            ++rep.dropped_docs;
            continue;
        }
        kept.push_back(i);
        for (const auto& [tok, c] : docs[i]) surviving_tokens.push_back(tok);
    }
    if (report) *report = rep;
    if (kept.empty()) throw CorpusError("empty corpus: no documents survive preprocessing");

    Vocabulary vocab = Vocabulary::from_unsorted(std::move(surviving_tokens));

    std::vector<std::string> users;
    std::unordered_map<std::string, std::size_t> user_pos;
    std::vector<std::vector<Document>> by_user;
    for (std::size_t i : kept) {
        const RawDocument& raw = raw_docs[i];
        auto [it, inserted] = user_pos.emplace(raw.user_id, users.size());
        if (inserted) {
            users.push_back(raw.user_id);
            by_user.emplace_back();
        }
        std::map<WordId, long> ids;
        for (const auto& [tok, c] : docs[i]) ids[*vocab.find(tok)] += c;
        by_user[it->second].push_back(Document::from_counts(raw.doc_id, raw.user_id, ids));
    }
    return Corpus(std::move(vocab), std::move(users), std::move(by_user));
}

std::vector<RawDocument> render_tokens(const Corpus& corpus) {
    std::vector<RawDocument> out;
    out.reserve(corpus.total_docs());
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        for (const Document& doc : corpus.docs(u)) {
            std::string text;
            for (std::size_t i = 0; i < doc.words.size(); ++i) {
                for (long k = 0; k < doc.counts[i]; ++k) {
                    if (!text.empty()) text.push_back(' ');
                    text += corpus.vocabulary().token(doc.words[i]);
                }
            }
            out.push_back(RawDocument{doc.user_id, doc.doc_id, std::move(text), std::nullopt});
        }
    }
    return out;
}

HoldoutSplit holdout_split(const Corpus& corpus, double frac, std::size_t min_docs, std::uint64_t seed) {
    if (!(frac > 0.0 && frac < 1.0)) throw DomainError("holdout fraction must lie in (0, 1)");
    if (min_docs < 1) throw DomainError("min_docs must be at least 1");

    Rng rng(seed);
    std::vector<std::string> train_users, test_users;
    std::vector<std::vector<Document>> train_docs, test_docs;
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        const auto docs = corpus.docs(u);
        const std::size_t n = docs.size();
        std::size_t k = 0;
        if (n >= min_docs) k = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));

        std::vector<bool> in_test(n, false);
        if (k > 0) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t j = i + rng.uniform_index(n - i);
                std::swap(idx[i], idx[j]);
                in_test[idx[i]] = true;
            }
        }
        std::vector<Document> tr, te;
        for (std::size_t d = 0; d < n; ++d) (in_test[d] ? te : tr).push_back(docs[d]);
        train_users.push_back(corpus.user_id(u));
        train_docs.push_back(std::move(tr));
        if (!te.empty()) {
            test_users.push_back(corpus.user_id(u));
            test_docs.push_back(std::move(te));
        }
    }
    HoldoutSplit split{Corpus(corpus.vocabulary(), std::move(train_users), std::move(train_docs)),
                       Corpus(corpus.vocabulary(), std::move(test_users), std::move(test_docs)), false};
    split.test_empty = split.test.empty();
    return split;
}

}  // namespace stldac
