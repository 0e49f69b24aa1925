#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace kaneq {

struct LinkConfig;
struct EqualizerModel;

// Flat "key = value" text config. '#' starts a comment, blank lines are
// skipped, keys may use dotted prefixes.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // Throws if a key outside `known` (comma-separated list) is present.
    void require_known(const std::string& known) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

LinkConfig link_config_from_kv(const KvConfig& kv);
LinkConfig link_config_from_file(const std::string& path);
std::string link_config_to_string(const LinkConfig& cfg);
uint64_t link_config_hash(const LinkConfig& cfg);

// Architecture config: family = fir|kan1|cnn2|kan2 plus per-family keys.
EqualizerModel model_from_kv(const KvConfig& kv);
EqualizerModel model_from_file(const std::string& path);

} // namespace kaneq
