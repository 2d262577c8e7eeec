#pragma once

#include "votesplat/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>

namespace votesplat::json {

using Json = nlohmann::ordered_json;

Json read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const Json &value);

/// Strict object reader: every field access is recorded and finish() rejects
/// anything left unread, naming the file and field in the error.
class Reader {
public:
    Reader(const Json &object, std::string where);

    bool has(const std::string &key) const { return obj_.contains(key); }

    template <typename T>
    T get(const std::string &key) {
        const Json &v = field(key);
        try {
            return v.get<T>();
        } catch (const nlohmann::json::exception &) {
            throw ValidationError(where_ + ": field '" + key + "' has the wrong type");
        }
    }

    template <typename T>
    T get_or(const std::string &key, T fallback) {
        if (!has(key)) {
            return fallback;
        }
        return get<T>(key);
    }

    Vec3 vec3(const std::string &key);
    const Json &object(const std::string &key);
    const Json &array(const std::string &key);
    void expect_string(const std::string &key, const std::string &value);
    const std::string &where() const { return where_; }
    void finish() const;

private:
    const Json &field(const std::string &key);

    Json obj_;
    std::string where_;
    std::set<std::string> seen_;
};

Vec3 to_vec3(const Json &value, const std::string &where);

} // namespace votesplat::json
