#include "stldac/json_io.hpp"

#include <fstream>
#include <sstream>

#include "stldac/error.hpp"

namespace stldac::io {

void throw_corrupt(const std::string& what) { throw CorruptFileError(what); }

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw CorruptFileError("corrupt file " + what + ": " + e.what());
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json(buf.str(), "'" + path.string() + "'");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

void write_json_file(const std::filesystem::path& path, const json& value) {
    write_text_file(path, value.dump() + "\n");
}

void stamp_schema(json& value, const std::string& schema, int version) {
    value["schema"] = schema;
    value["schema_version"] = version;
}

void check_schema(const json& value, const std::string& schema, int version) {
    if (!value.is_object()) throw CorruptFileError("expected a JSON object for " + schema);
    if (!value.contains("schema") || !value["schema"].is_string() || value["schema"].get<std::string>() != schema)
        throw SchemaError("not a " + schema + " file");
    if (!value.contains("schema_version") || !value["schema_version"].is_number_integer())
        throw SchemaError(schema + ": missing schema_version");
    const int found = value["schema_version"].get<int>();
    if (found != version)
        throw SchemaError(schema + ": unsupported schema_version " + std::to_string(found) + " (reader understands " +
                          std::to_string(version) + ")");
}

namespace {

template <typename T>
json matrix_json(const Matrix<T>& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

template <typename T>
Matrix<T> matrix_parse(const json& value) {
    const auto rows = field<std::size_t>(value, "rows");
    const auto cols = field<std::size_t>(value, "cols");
    auto data = field<std::vector<T>>(value, "data");
    if (data.size() != rows * cols) throw CorruptFileError("matrix data length does not match its shape");
    Matrix<T> m(rows, cols);
    m.data() = std::move(data);
    return m;
}

}  // namespace

json to_json(const MatrixD& m) { return matrix_json(m); }
json to_json(const MatrixI& m) { return matrix_json(m); }
MatrixD matrix_from_json(const json& value) { return matrix_parse<double>(value); }
MatrixI int_matrix_from_json(const json& value) { return matrix_parse<long>(value); }

}  // namespace stldac::io
