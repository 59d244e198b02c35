#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace stldac {

using WordId = std::uint32_t;

/// Ordered set of unique tokens with a dense id map.
class Vocabulary {
public:
    Vocabulary() = default;
    /// Tokens must be unique and nonempty; ids follow the given order.
    explicit Vocabulary(std::vector<std::string> tokens);
    /// Sorted construction: ids are independent of insertion order.
    static Vocabulary from_unsorted(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(WordId id) const { return tokens_.at(id); }
    std::optional<WordId> find(const std::string& token) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, WordId> index_;
};

/// One short document as sparse word counts, sorted by word id.
struct Document {
    std::string doc_id;
    std::string user_id;
    std::vector<WordId> words;
    std::vector<long> counts;

    long length() const noexcept;
    /// Builds the sparse representation from (possibly repeated) word ids.
    static Document from_tokens(std::string doc_id, std::string user_id, std::span<const WordId> tokens);
    static Document from_counts(std::string doc_id, std::string user_id, const std::map<WordId, long>& counts);

    friend bool operator==(const Document&, const Document&) = default;
};

/// Vocabulary plus per-user document collections. users[u] owns docs[u].
class Corpus {
public:
    Corpus() = default;
    Corpus(Vocabulary vocabulary, std::vector<std::string> users, std::vector<std::vector<Document>> docs);

    const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
    std::size_t vocab_size() const noexcept { return vocabulary_.size(); }
    std::size_t num_users() const noexcept { return users_.size(); }
    std::size_t total_docs() const noexcept { return total_docs_; }
    bool empty() const noexcept { return total_docs_ == 0; }

    const std::vector<std::string>& users() const noexcept { return users_; }
    const std::string& user_id(std::size_t u) const { return users_.at(u); }
    std::optional<std::size_t> find_user(const std::string& user_id) const;

    std::span<const Document> docs(std::size_t u) const { return docs_.at(u); }
    std::size_t num_docs(std::size_t u) const { return docs_.at(u).size(); }
    /// Offset of user u's first document in user-major global order.
    std::size_t doc_offset(std::size_t u) const { return offsets_.at(u); }
    const Document& doc(std::size_t u, std::size_t d) const { return docs_.at(u).at(d); }

    long total_tokens() const;

    friend bool operator==(const Corpus& a, const Corpus& b) {
        return a.vocabulary_ == b.vocabulary_ && a.users_ == b.users_ && a.docs_ == b.docs_;
    }

private:
    Vocabulary vocabulary_;
    std::vector<std::string> users_;
    std::vector<std::vector<Document>> docs_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::string, std::size_t> user_index_;
    std::size_t total_docs_ = 0;
};

// Preprocessing ---------------------------------------------------------------

struct RawDocument {
    std::string user_id;
    std::string doc_id;
    std::string text;
    /// Pre-tokenized input (token, count); when set, text is ignored.
    std::optional<std::vector<std::pair<std::string, long>>> token_counts;
};

using Tokenizer = std::function<std::vector<std::string>(const std::string&)>;

/// Lowercases ASCII, splits on whitespace, strips ASCII punctuation.
std::vector<std::string> default_tokenize(const std::string& text);

/// Lowercase + punctuation stripping applied to a single token.
std::string normalize_token(const std::string& token);

/// Tokens beginning with http, https or www.
bool is_url_like(const std::string& token);

struct PreprocessReport {
    std::size_t raw_docs = 0;
    std::size_t dropped_docs = 0;
    std::size_t rare_tokens_removed = 0;  // distinct tokens below the frequency threshold
    std::size_t stop_or_url_removed = 0;  // token occurrences
    long min_doc_count = 0;               // ceil(min_doc_frac * raw_docs)
};

/// Lowercase -> stopword/URL removal -> rare-word removal (document frequency
/// below ceil(min_doc_frac * D_raw)) -> drop documents with <= 1 token.
/// Throws CorpusError("empty corpus ...") when nothing survives.
Corpus preprocess(std::span<const RawDocument> raw_docs, double min_doc_frac,
                  const std::unordered_set<std::string>& stopwords, PreprocessReport* report = nullptr,
                  const Tokenizer& tokenizer = default_tokenize);

/// Renders each document back to whitespace-joined tokens (word repeated count times).
std::vector<RawDocument> render_tokens(const Corpus& corpus);

struct HoldoutSplit {
    Corpus train;
    Corpus test;
    bool test_empty = false;
};

/// For each user with at least min_docs documents, floor(frac * n_u) documents
/// are sampled without replacement into the test corpus. Both halves share
/// the input vocabulary.
HoldoutSplit holdout_split(const Corpus& corpus, double frac, std::size_t min_docs, std::uint64_t seed);

// I/O -------------------------------------------------------------------------

/// Reads line-delimited JSON records. Each line has "user_id", "doc_id" and
/// either "text" or "tokens" (object token -> count).
std::vector<RawDocument> read_raw_records(const std::filesystem::path& path);

inline constexpr int kCorpusSchemaVersion = 1;

std::string corpus_to_json_string(const Corpus& corpus);
Corpus corpus_from_json_string(const std::string& text);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

/// FNV-1a hash of the serialized corpus, for chain metadata.
std::uint64_t corpus_fingerprint(const Corpus& corpus);

}  // namespace stldac
