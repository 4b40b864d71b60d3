#pragma once

#include "guidebench/errors.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace guidebench {

/// Reads one JSON value per non-blank line. Throws ParseError with the line number.
template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::StorageFailure, "cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <class T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::StorageFailure, "cannot write " + path.string());
    for (const auto& v : values) out << nlohmann::json(v).dump() << '\n';
    if (!out) throw Error(ErrorKind::StorageFailure, "write failed for " + path.string());
}

template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& values) {
    write_jsonl(path, std::span<const T>(values));
}

}  // namespace guidebench
