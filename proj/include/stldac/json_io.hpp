#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "stldac/matrix.hpp"

namespace stldac::io {

using json = nlohmann::json;

[[noreturn]] void throw_corrupt(const std::string& what);

/// Parses a JSON file. Missing file -> Error; malformed -> CorruptFileError.
json read_json_file(const std::filesystem::path& path);
json parse_json(const std::string& text, const std::string& what);

/// Writes compact JSON followed by a newline; creates parent directories.
void write_json_file(const std::filesystem::path& path, const json& value);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Stamps "schema" and "schema_version" into an object.
void stamp_schema(json& value, const std::string& schema, int version);
/// Throws SchemaError unless value carries exactly this schema and version.
void check_schema(const json& value, const std::string& schema, int version);

json to_json(const MatrixD& m);
json to_json(const MatrixI& m);
MatrixD matrix_from_json(const json& value);
MatrixI int_matrix_from_json(const json& value);

/// Reads a required field, translating nlohmann type errors into CorruptFileError.
template <typename T>
T field(const json& obj, const char* key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw_corrupt(std::string("field '") + key + "': " + e.what());
    }
}

}  // namespace stldac::io
