#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <unistd.h>

#include <textevo/core.hpp>
#include <textevo/digest.hpp>

namespace textevo {

/// Content-addressed cache key: SHA-256 over the canonical serialization of
/// (candidate text, example id + payload, evaluator identity, evaluator
/// version). Any byte difference in the candidate text changes the digest.
inline std::string cache_key_digest(const std::string& candidate_text, const Example* example,
                                    const std::string& evaluator_identity, const std::string& evaluator_version) {
    json parts = json::array();
    parts.push_back(candidate_text);
    parts.push_back(example ? example->to_json() : json(nullptr));
    parts.push_back(evaluator_identity);
    parts.push_back(evaluator_version);
    return sha256_hex(parts.dump());
}

/// Persistent evaluation cache with an in-memory front. Disk layout is a
/// two-level hex fan-out by digest prefix: <dir>/ab/cd/<digest>.json.
/// Safe for concurrent readers; concurrent misses for the same key may both
/// execute and the last write wins with identical content.
class EvalCache {
public:
    EvalCache() = default;

    /// An empty directory path keeps the cache memory-only.
    explicit EvalCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    bool contains(const std::string& digest) {
        return static_cast<bool>(lookup(digest));
    }

    std::optional<EvaluationRecord> lookup(const std::string& digest) {
        {
            std::lock_guard lock(mu_);
            auto it = memory_.find(digest);
            if (it != memory_.end()) return EvaluationRecord::from_json(it->second);
        }
        if (dir_.empty()) return std::nullopt;
        const auto path = entry_path(digest);
        if (!std::filesystem::exists(path)) return std::nullopt;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CacheError("cache entry unreadable: " + path.string());
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        json j = json::parse(body, nullptr, false);
        if (j.is_discarded()) throw CacheError("cache entry corrupt: " + path.string());
        EvaluationRecord record;
        try {
            record = EvaluationRecord::from_json(j);
        } catch (const std::exception& e) {
            throw CacheError("cache entry invalid: " + path.string() + ": " + e.what());
        }
        std::lock_guard lock(mu_);
        memory_[digest] = std::move(j);
        return record;
    }

    void store(const std::string& digest, const EvaluationRecord& record) {
        json j = record.to_json();
        if (!dir_.empty()) {
            const auto path = entry_path(digest);
            std::filesystem::create_directories(path.parent_path());
            const auto tmp = path.string() + ".tmp" + std::to_string(::getpid());
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw CacheError("cache entry unwritable: " + tmp);
                out << j.dump() << '\n';
                if (!out.good()) throw CacheError("cache write failed: " + tmp);
            }
            std::error_code ec;
            std::filesystem::rename(tmp, path, ec);
            if (ec) throw CacheError("cache rename failed: " + path.string() + ": " + ec.message());
        }
        std::lock_guard lock(mu_);
        memory_[digest] = std::move(j);
    }

    const std::filesystem::path& directory() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& digest) const {
        return dir_ / digest.substr(0, 2) / digest.substr(2, 2) / (digest + ".json");
    }

    std::filesystem::path dir_;
    std::unordered_map<std::string, json> memory_;
    std::mutex mu_;
};

} // namespace textevo
