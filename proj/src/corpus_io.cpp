#include <fstream>
#include <sstream>

#include "stldac/corpus.hpp"
#include "stldac/error.hpp"
#include "stldac/json_io.hpp"

namespace stldac {

using io::json;

std::vector<RawDocument> read_raw_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open input '" + path.string() + "'");
    std::vector<RawDocument> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json rec = io::parse_json(line, where);
        RawDocument raw;
        raw.user_id = io::field<std::string>(rec, "user_id");
        raw.doc_id = io::field<std::string>(rec, "doc_id");
        if (rec.contains("tokens")) {
            std::vector<std::pair<std::string, long>> counts;
            for (const auto& [tok, c] : rec["tokens"].items()) {
                if (!c.is_number_integer()) throw CorruptFileError(where + ": token counts must be integers");
                counts.emplace_back(tok, c.get<long>());
            }
            raw.token_counts = std::move(counts);
        } else {
            raw.text = io::field<std::string>(rec, "text");
        }
        records.push_back(std::move(raw));
    }
    return records;
}

namespace {

json corpus_json(const Corpus& corpus) {
    json users = json::array();
    for (std::size_t u = 0; u < corpus.num_users(); ++u) {
        json docs = json::array();
        for (const Document& doc : corpus.docs(u)) {
            json words = json::array();
            for (std::size_t i = 0; i < doc.words.size(); ++i) words.push_back({doc.words[i], doc.counts[i]});
            docs.push_back({{"doc_id", doc.doc_id}, {"words", std::move(words)}});
        }
        users.push_back({{"user_id", corpus.user_id(u)}, {"docs", std::move(docs)}});
    }
    json out{{"vocabulary", corpus.vocabulary().tokens()}, {"users", std::move(users)}};
    io::stamp_schema(out, "stldac.corpus", kCorpusSchemaVersion);
    return out;
}

Corpus corpus_parse(const json& value) {
    io::check_schema(value, "stldac.corpus", kCorpusSchemaVersion);
    try {
        Vocabulary vocab(io::field<std::vector<std::string>>(value, "vocabulary"));
        std::vector<std::string> users;
        std::vector<std::vector<Document>> docs;
        for (const json& user : value.at("users")) {
            const auto user_id = io::field<std::string>(user, "user_id");
            users.push_back(user_id);
            auto& list = docs.emplace_back();
            for (const json& d : user.at("docs")) {
                Document doc;
                doc.doc_id = io::field<std::string>(d, "doc_id");
                doc.user_id = user_id;
                for (const json& pair : d.at("words")) {
                    doc.words.push_back(pair.at(0).get<WordId>());
                    doc.counts.push_back(pair.at(1).get<long>());
                }
                list.push_back(std::move(doc));
            }
        }
        return Corpus(std::move(vocab), std::move(users), std::move(docs));
    } catch (const json::exception& e) {
        throw CorruptFileError(std::string("corrupt corpus file: ") + e.what());
    } catch (const ValidationError& e) {
        throw CorruptFileError(std::string("corrupt corpus file: ") + e.what());
    }
}

}  // namespace

std::string corpus_to_json_string(const Corpus& corpus) { return corpus_json(corpus).dump(); }

Corpus corpus_from_json_string(const std::string& text) { return corpus_parse(io::parse_json(text, "corpus")); }

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    io::write_json_file(path, corpus_json(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return corpus_parse(io::read_json_file(path)); }

std::uint64_t corpus_fingerprint(const Corpus& corpus) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : corpus_to_json_string(corpus)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace stldac
