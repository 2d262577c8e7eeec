#include "votesplat/json_util.hpp"

#include <fstream>
#include <sstream>

namespace votesplat::json {

Json read_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return Json::parse(buffer.str());
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
}

void write_file(const std::filesystem::path &path, const Json &value) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << value.dump(2) << "\n";
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

Reader::Reader(const Json &object, std::string where) : obj_(object), where_(std::move(where)) {
    if (!obj_.is_object()) {
        throw ValidationError(where_ + ": expected a JSON object");
    }
}

const Json &Reader::field(const std::string &key) {
    const auto it = obj_.find(key);
    if (it == obj_.end()) {
        throw ValidationError(where_ + ": missing field '" + key + "'");
    }
    seen_.insert(key);
    return *it;
}

Vec3 Reader::vec3(const std::string &key) { return to_vec3(field(key), where_ + ": field '" + key + "'"); }

const Json &Reader::object(const std::string &key) {
    const Json &v = field(key);
    if (!v.is_object()) {
        throw ValidationError(where_ + ": field '" + key + "' must be an object");
    }
    return v;
}

const Json &Reader::array(const std::string &key) {
    const Json &v = field(key);
    if (!v.is_array()) {
        throw ValidationError(where_ + ": field '" + key + "' must be an array");
    }
    return v;
}

void Reader::expect_string(const std::string &key, const std::string &value) {
    if (get<std::string>(key) != value) {
        throw ValidationError(where_ + ": field '" + key + "' must be \"" + value + "\"");
    }
}

void Reader::finish() const {
    for (const auto &[key, _] : obj_.items()) {
        if (!seen_.count(key)) {
            throw ValidationError(where_ + ": unknown field '" + key + "'");
        }
    }
}

Vec3 to_vec3(const Json &value, const std::string &where) {
    if (!value.is_array() || value.size() != 3) {
        throw ValidationError(where + " must be an array of 3 numbers");
    }
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!value[static_cast<std::size_t>(i)].is_number()) {
            throw ValidationError(where + " must be an array of 3 numbers");
        }
        v[i] = value[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

} // namespace votesplat::json
