#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include <textevo/errors.hpp>

namespace textevo {

using json = nlohmann::json;

/// Reference to an image diagnostic: either a filesystem path or an inline
/// byte payload, plus a MIME-style media type.
struct ImageRef {
    std::string media_type;
    std::string path;  // empty when the payload is inline
    std::string data;  // raw bytes, empty when referenced by path

    bool operator==(const ImageRef&) const = default;
};

/// One table row: ordered key/value string pairs.
using TableRow = std::vector<std::pair<std::string, std::string>>;

/// Numeric sub-scores, higher is better. Sorted by name.
using SubScores = std::map<std::string, double>;

/// Tagged diagnostic value: free text, a number, a table, sub-scores or an
/// image reference.
using SideInfoValue = std::variant<std::string, double, std::vector<TableRow>, SubScores, ImageRef>;

namespace detail {

inline std::string base64_encode(const std::string& in) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= in.size()) {
        std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                          (static_cast<unsigned char>(in[i + 1]) << 8) |
                          static_cast<unsigned char>(in[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    const std::size_t rest = in.size() - i;
    if (rest == 1) {
        std::uint32_t v = static_cast<unsigned char>(in[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                          (static_cast<unsigned char>(in[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline int base64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

inline std::string base64_decode(const std::string& in) {
    std::string out;
    out.reserve(in.size() / 4 * 3);
    int buf = 0;
    int bits = 0;
    for (char c : in) {
        if (c == '=') break;
        const int v = base64_value(c);
        if (v < 0) throw ContractViolation("base64_decode: invalid character");
        buf = (buf << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((buf >> bits) & 0xff));
        }
    }
    return out;
}

} // namespace detail

/// Ordered map of named diagnostics attached to a score. Entry order is
/// insertion order and survives serialization, so rendered prompts are
/// reproducible.
class SideInfo {
public:
    SideInfo() = default;

    bool contains(const std::string& name) const {
        for (const auto& [k, v] : entries_)
            if (k == name) return true;
        return false;
    }

    const SideInfoValue* find(const std::string& name) const {
        for (const auto& [k, v] : entries_)
            if (k == name) return &v;
        return nullptr;
    }

    /// Inserts a new entry; names must be unique within one SideInfo.
    void add(std::string name, SideInfoValue value) {
        if (contains(name)) throw ContractViolation("SideInfo: duplicate entry name '" + name + "'");
        validate(value);
        entries_.emplace_back(std::move(name), std::move(value));
    }

    /// Replaces an existing entry in place or appends a new one.
    void set(std::string name, SideInfoValue value) {
        validate(value);
        for (auto& [k, v] : entries_) {
            if (k == name) {
                v = std::move(value);
                return;
            }
        }
        entries_.emplace_back(std::move(name), std::move(value));
    }

    const std::vector<std::pair<std::string, SideInfoValue>>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    bool operator==(const SideInfo&) const = default;

    json to_json() const {
        json arr = json::array();
        for (const auto& [name, value] : entries_)
            arr.push_back(json::array({name, value_to_json(value)}));
        return arr;
    }

    static SideInfo from_json(const json& j) {
        if (!j.is_array()) throw ContractViolation("SideInfo: expected array");
        SideInfo si;
        for (const auto& entry : j) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string())
                throw ContractViolation("SideInfo: malformed entry");
            si.add(entry[0].get<std::string>(), value_from_json(entry[1]));
        }
        return si;
    }

    static json value_to_json(const SideInfoValue& value) {
        json j;
        if (const auto* s = std::get_if<std::string>(&value)) {
            j["kind"] = "text";
            j["text"] = *s;
        } else if (const auto* d = std::get_if<double>(&value)) {
            j["kind"] = "number";
            j["number"] = *d;
        } else if (const auto* rows = std::get_if<std::vector<TableRow>>(&value)) {
            j["kind"] = "table";
            json jr = json::array();
            for (const auto& row : *rows) {
                json cells = json::array();
                for (const auto& [k, v] : row) cells.push_back(json::array({k, v}));
                jr.push_back(cells);
            }
            j["rows"] = jr;
        } else if (const auto* subs = std::get_if<SubScores>(&value)) {
            j["kind"] = "sub_scores";
            j["values"] = json(*subs);
        } else if (const auto* img = std::get_if<ImageRef>(&value)) {
            j["kind"] = "image";
            j["media_type"] = img->media_type;
            if (!img->path.empty()) j["path"] = img->path;
            if (!img->data.empty()) j["data"] = detail::base64_encode(img->data);
        }
        return j;
    }

    static SideInfoValue value_from_json(const json& j) {
        if (!j.is_object() || !j.contains("kind"))
            throw ContractViolation("SideInfoValue: missing kind tag");
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "text") return j.at("text").get<std::string>();
        if (kind == "number") return j.at("number").get<double>();
        if (kind == "table") {
            std::vector<TableRow> rows;
            for (const auto& jr : j.at("rows")) {
                TableRow row;
                for (const auto& cell : jr)
                    row.emplace_back(cell.at(0).get<std::string>(), cell.at(1).get<std::string>());
                rows.push_back(std::move(row));
            }
            return rows;
        }
        if (kind == "sub_scores") return j.at("values").get<SubScores>();
        if (kind == "image") {
            ImageRef img;
            img.media_type = j.at("media_type").get<std::string>();
            if (j.contains("path")) img.path = j.at("path").get<std::string>();
            if (j.contains("data")) img.data = detail::base64_decode(j.at("data").get<std::string>());
            return img;
        }
        throw ContractViolation("SideInfoValue: unknown kind '" + kind + "'");
    }

private:
    static void validate(const SideInfoValue& value) {
        if (const auto* d = std::get_if<double>(&value)) {
            if (!std::isfinite(*d)) throw ContractViolation("SideInfo: non-finite number value");
        } else if (const auto* subs = std::get_if<SubScores>(&value)) {
            for (const auto& [name, v] : *subs)
                if (!std::isfinite(v))
                    throw ContractViolation("SideInfo: non-finite sub_score '" + name + "'");
        } else if (const auto* img = std::get_if<ImageRef>(&value)) {
            if (img->media_type.empty()) throw ContractViolation("SideInfo: image media_type must be nonempty");
        }
    }

    std::vector<std::pair<std::string, SideInfoValue>> entries_;
};

/// Serialized size of one SideInfo in bytes (canonical form).
inline std::size_t side_info_byte_size(const SideInfo& si) {
    return si.to_json().dump().size();
}

/// Enforces the per-record size cap by replacing the largest entries with a
/// short placeholder until the serialized form fits. A marker entry records
/// how many entries were truncated.
inline SideInfo cap_side_info(SideInfo si, std::size_t cap_bytes) {
    if (side_info_byte_size(si) <= cap_bytes) return si;
    std::size_t truncated = 0;
    while (side_info_byte_size(si) > cap_bytes) {
        std::size_t worst_index = 0;
        std::size_t worst_size = 0;
        bool found = false;
        for (std::size_t i = 0; i < si.entries().size(); ++i) {
            const auto& [name, value] = si.entries()[i];
            if (const auto* s = std::get_if<std::string>(&value); s && s->rfind("[truncated ", 0) == 0)
                continue;  // already truncated
            const std::size_t sz = SideInfo::value_to_json(value).dump().size();
            if (sz >= worst_size) {
                worst_size = sz;
                worst_index = i;
                found = true;
            }
        }
        if (!found) break;
        const std::string name = si.entries()[worst_index].first;
        si.set(name, std::string("[truncated " + std::to_string(worst_size) + " bytes]"));
        ++truncated;
    }
    si.set("si_truncated", static_cast<double>(truncated));
    return si;
}

} // namespace textevo
