#include "kaneq/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kaneq/channel.hpp"
#include "kaneq/common.hpp"
#include "kaneq/equalizer.hpp"

namespace kaneq {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not 'key = value': " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key on line " + std::to_string(lineno));
        cfg.kv_[key] = val;
    }
    return cfg;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second);
    }
}

long KvConfig::get_long(const std::string& key, long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size() || v != static_cast<double>(static_cast<long>(v)))
            throw std::invalid_argument("not an integer");
        return static_cast<long>(v);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
}

void KvConfig::require_known(const std::string& known) const {
    std::set<std::string> allowed;
    std::istringstream in(known);
    std::string tok;
    while (std::getline(in, tok, ',')) allowed.insert(trim(tok));
    for (const auto& [k, v] : kv_)
        if (!allowed.count(k))
            throw std::runtime_error("config: unknown key '" + k + "'");
}

namespace {

const char* kLinkKeys =
    "baud_rate,sps_sim,sps_out,wavelength,fiber_length,dispersion_ps_nm_km,"
    "launch_power_dbm,rop_dbm,drive_vpp,rx_bandwidth,rx_lowpass,thermal_psd,ase_psd,rng_seed,"
    "eam.enabled,eam.knee_voltage,eam.slope,eam.extinction_db,eam.bias,"
    "soa.enabled,soa.small_signal_gain_db,soa.saturation_power_dbm";

} // namespace

LinkConfig link_config_from_kv(const KvConfig& kv) {
    kv.require_known(kLinkKeys);
    LinkConfig cfg;
    cfg.baud_rate = kv.get_double("baud_rate", cfg.baud_rate);
    cfg.sps_sim = static_cast<int>(kv.get_long("sps_sim", cfg.sps_sim));
    cfg.sps_out = static_cast<int>(kv.get_long("sps_out", cfg.sps_out));
    cfg.wavelength = kv.get_double("wavelength", cfg.wavelength);
    cfg.fiber_length = kv.get_double("fiber_length", cfg.fiber_length);
    cfg.dispersion_ps_nm_km = kv.get_double("dispersion_ps_nm_km", cfg.dispersion_ps_nm_km);
    cfg.launch_power_dbm = kv.get_double("launch_power_dbm", cfg.launch_power_dbm);
    cfg.rop_dbm = kv.get_double("rop_dbm", cfg.rop_dbm);
    cfg.drive_vpp = kv.get_double("drive_vpp", cfg.drive_vpp);
    cfg.rx_bandwidth = kv.get_double("rx_bandwidth", cfg.rx_bandwidth);
    cfg.rx_lowpass = kv.get_bool("rx_lowpass", cfg.rx_lowpass);
    cfg.thermal_psd = kv.get_double("thermal_psd", cfg.thermal_psd);
    cfg.ase_psd = kv.get_double("ase_psd", cfg.ase_psd);
    cfg.rng_seed = static_cast<uint64_t>(kv.get_long("rng_seed", static_cast<long>(cfg.rng_seed)));
    cfg.eam.enabled = kv.get_bool("eam.enabled", cfg.eam.enabled);
    cfg.eam.knee_voltage = kv.get_double("eam.knee_voltage", cfg.eam.knee_voltage);
    cfg.eam.slope = kv.get_double("eam.slope", cfg.eam.slope);
    cfg.eam.extinction_db = kv.get_double("eam.extinction_db", cfg.eam.extinction_db);
    cfg.eam.bias = kv.get_double("eam.bias", cfg.eam.bias);
    cfg.soa.enabled = kv.get_bool("soa.enabled", cfg.soa.enabled);
    cfg.soa.small_signal_gain_db = kv.get_double("soa.small_signal_gain_db", cfg.soa.small_signal_gain_db);
    cfg.soa.saturation_power_dbm = kv.get_double("soa.saturation_power_dbm", cfg.soa.saturation_power_dbm);
    cfg.validate();
    return cfg;
}

LinkConfig link_config_from_file(const std::string& path) {
    return link_config_from_kv(KvConfig::parse_file(path));
}

std::string link_config_to_string(const LinkConfig& cfg) {
    char buf[256];
    std::string out;
    auto emit = [&](const char* key, const char* fmt, auto value) {
        snprintf(buf, sizeof(buf), fmt, value);
        out += key;
        out += " = ";
        out += buf;
        out += "\n";
    };
    // Keys in a fixed order so the hash is canonical.
    emit("baud_rate", "%.17g", cfg.baud_rate);
    emit("sps_sim", "%d", cfg.sps_sim);
    emit("sps_out", "%d", cfg.sps_out);
    emit("wavelength", "%.17g", cfg.wavelength);
    emit("fiber_length", "%.17g", cfg.fiber_length);
    emit("dispersion_ps_nm_km", "%.17g", cfg.dispersion_ps_nm_km);
    emit("launch_power_dbm", "%.17g", cfg.launch_power_dbm);
    emit("rop_dbm", "%.17g", cfg.rop_dbm);
    emit("drive_vpp", "%.17g", cfg.drive_vpp);
    emit("rx_bandwidth", "%.17g", cfg.rx_bandwidth);
    emit("rx_lowpass", "%d", cfg.rx_lowpass ? 1 : 0);
    emit("thermal_psd", "%.17g", cfg.thermal_psd);
    emit("ase_psd", "%.17g", cfg.ase_psd);
    emit("rng_seed", "%llu", static_cast<unsigned long long>(cfg.rng_seed));
    emit("eam.enabled", "%d", cfg.eam.enabled ? 1 : 0);
    emit("eam.knee_voltage", "%.17g", cfg.eam.knee_voltage);
    emit("eam.slope", "%.17g", cfg.eam.slope);
    emit("eam.extinction_db", "%.17g", cfg.eam.extinction_db);
    emit("eam.bias", "%.17g", cfg.eam.bias);
    emit("soa.enabled", "%d", cfg.soa.enabled ? 1 : 0);
    emit("soa.small_signal_gain_db", "%.17g", cfg.soa.small_signal_gain_db);
    emit("soa.saturation_power_dbm", "%.17g", cfg.soa.saturation_power_dbm);
    return out;
}

uint64_t link_config_hash(const LinkConfig& cfg) { return fnv1a(link_config_to_string(cfg)); }

EqualizerModel model_from_kv(const KvConfig& kv) {
    const std::string family = kv.get_str("family", "");
    if (family == "fir") {
        kv.require_known("family,taps");
        return make_fir(static_cast<int>(kv.get_long("taps", 21)));
    }
    if (family == "kan1") {
        kv.require_known("family,taps,g");
        return make_kan1(static_cast<int>(kv.get_long("taps", 21)),
                         static_cast<int>(kv.get_long("g", 17)));
    }
    if (family == "cnn2") {
        kv.require_known("family,l1.c_out,l1.k,l1.s,l2.k,l2.s");
        return make_cnn2(static_cast<int>(kv.get_long("l1.c_out", 2)),
                         static_cast<int>(kv.get_long("l1.k", 8)),
                         static_cast<int>(kv.get_long("l1.s", 1)),
                         static_cast<int>(kv.get_long("l2.k", 8)),
                         static_cast<int>(kv.get_long("l2.s", 2)));
    }
    if (family == "kan2") {
        kv.require_known("family,l1.c_out,l1.k,l1.s,l1.g,l2.k,l2.s,l2.g");
        return make_kan2(static_cast<int>(kv.get_long("l1.c_out", 2)),
                         static_cast<int>(kv.get_long("l1.k", 8)),
                         static_cast<int>(kv.get_long("l1.s", 1)),
                         static_cast<int>(kv.get_long("l1.g", 5)),
                         static_cast<int>(kv.get_long("l2.k", 8)),
                         static_cast<int>(kv.get_long("l2.s", 2)),
                         static_cast<int>(kv.get_long("l2.g", 5)));
    }
    throw std::runtime_error("config: family must be one of fir, kan1, cnn2, kan2 (got '" +
                             family + "')");
}

EqualizerModel model_from_file(const std::string& path) {
    return model_from_kv(KvConfig::parse_file(path));
}

} // namespace kaneq
