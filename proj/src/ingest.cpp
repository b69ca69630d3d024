#include "etcnas/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace etcnas {

FlowKey canonical_key(const PacketRecord& p) {
    FlowKey k;
    k.protocol = p.protocol;
    auto a = std::make_pair(p.src_ip, p.src_port);
    auto b = std::make_pair(p.dst_ip, p.dst_port);
    if (b < a) std::swap(a, b);
    k.ip_a = a.first;
    k.port_a = a.second;
    k.ip_b = b.first;
    k.port_b = b.second;
    return k;
}

uint64_t salted_flow_hash(const FlowKey& key, uint64_t salt) {
    uint64_t h = 14695981039346656037ULL ^ salt;
    auto mix = [&](const void* data, size_t n) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    mix(key.ip_a.data(), key.ip_a.size());
    mix(&key.port_a, sizeof(key.port_a));
    mix(key.ip_b.data(), key.ip_b.size());
    mix(&key.port_b, sizeof(key.port_b));
    mix(&key.protocol, sizeof(key.protocol));
    return h;
}

std::vector<Flow> assemble_flows(const std::vector<PacketRecord>& packets,
                                 double idle_timeout_s) {
    std::vector<Flow> flows;
    std::map<FlowKey, size_t> active; // key -> index of the open flow
    for (const PacketRecord& p : packets) {
        FlowKey key = canonical_key(p);
        auto it = active.find(key);
        if (it != active.end() &&
            p.timestamp - flows[it->second].last_ts > idle_timeout_s)
            it = active.end(); // idle gap splits the flow
        if (it == active.end()) {
            Flow f;
            f.key = key;
            f.first_ts = f.last_ts = p.timestamp;
            f.client_ip = p.src_ip; // initiator
            active[key] = flows.size();
            flows.push_back(std::move(f));
            it = active.find(key);
        }
        Flow& f = flows[it->second];
        f.last_ts = p.timestamp;
        f.packets.push_back(p);
    }
    return flows;
}

// ---- TLS ----------------------------------------------------------------------

namespace {

bool is_tls_handshake_packet(const std::vector<uint8_t>& payload) {
    return payload.size() >= 5 && payload[0] == 22 && payload[1] == 3;
}

struct ClientHelloInfo {
    std::optional<std::string> sni;
    std::vector<uint8_t> session_id;
    std::vector<ByteRange> ranges; // within the packet payload
};

// parses a ClientHello found at the start of a TLS record payload
std::optional<ClientHelloInfo> parse_client_hello(
    const std::vector<uint8_t>& p) {
    auto u16 = [&](size_t off) -> size_t {
        return (static_cast<size_t>(p[off]) << 8) | p[off + 1];
    };
    if (p.size() < 6 || p[5] != 1) return std::nullopt; // handshake type
    size_t pos = 9;                                     // skip headers
    if (p.size() < pos + 34) return std::nullopt;
    pos += 2 + 32; // client version + random
    ClientHelloInfo info;
    if (p.size() < pos + 1) return std::nullopt;
    size_t sid_len = p[pos++];
    if (p.size() < pos + sid_len) return std::nullopt;
    info.session_id.assign(p.begin() + pos, p.begin() + pos + sid_len);
    pos += sid_len;
    if (p.size() < pos + 2) return std::nullopt;
    size_t cs_len = u16(pos);
    pos += 2;
    if (p.size() < pos + cs_len) return std::nullopt;
    info.ranges.push_back({pos, pos + cs_len}); // cipher-suite list
    pos += cs_len;
    if (p.size() < pos + 1) return std::nullopt;
    size_t comp_len = p[pos++];
    pos += comp_len;
    if (p.size() < pos + 2) return info; // no extensions
    size_t ext_total = u16(pos);
    pos += 2;
    size_t ext_end = std::min(p.size(), pos + ext_total);
    while (pos + 4 <= ext_end) {
        size_t ext_type = u16(pos);
        size_t ext_len = u16(pos + 2);
        pos += 4;
        if (pos + ext_len > ext_end) break;
        if (ext_type == 0 && ext_len >= 5) {
            // server_name list: entry type (1) + name length (2) + name
            size_t name_len = u16(pos + 3);
            if (5 + name_len <= ext_len) {
                info.sni = std::string(p.begin() + pos + 5,
                                       p.begin() + pos + 5 + name_len);
                info.ranges.push_back({pos, pos + ext_len}); // extension data
            }
        }
        pos += ext_len;
    }
    return info;
}

} // namespace

HandshakeFeatures extract_tls_features(const Flow& flow, int64_t cutoff) {
    std::vector<const std::vector<uint8_t>*> handshake_packets;
    for (const PacketRecord& p : flow.packets) {
        if (p.protocol != Transport::TCP) continue;
        if (is_tls_handshake_packet(p.payload))
            handshake_packets.push_back(&p.payload);
        if (handshake_packets.size() == 3) break;
    }
    if (handshake_packets.empty())
        throw NoHandshakeFound("flow carries no TLS handshake records");

    HandshakeFeatures out;
    out.bytes.assign(3 * static_cast<size_t>(cutoff), 0);
    for (size_t i = 0; i < handshake_packets.size(); ++i) {
        const auto& payload = *handshake_packets[i];
        size_t n = std::min<size_t>(payload.size(), cutoff);
        std::copy(payload.begin(), payload.begin() + n,
                  out.bytes.begin() + i * cutoff);
        auto hello = parse_client_hello(payload);
        if (hello && out.session_id.empty()) {
            out.sni = hello->sni;
            out.session_id = hello->session_id;
            for (ByteRange r : hello->ranges) {
                r.begin = std::min<size_t>(r.begin, n) + i * cutoff;
                r.end = std::min<size_t>(r.end, n) + i * cutoff;
                if (r.begin < r.end) out.obfuscation_ranges.push_back(r);
            }
        }
    }
    return out;
}

// ---- QUIC ---------------------------------------------------------------------

std::vector<uint8_t> extract_quic_features(const Flow& flow, int64_t cutoff) {
    for (const PacketRecord& p : flow.packets) {
        if (p.protocol != Transport::UDP || p.payload.empty()) continue;
        if (p.payload[0] & 0x80) { // long header
            std::vector<uint8_t> out(cutoff, 0);
            size_t n = std::min<size_t>(p.payload.size(), cutoff);
            std::copy(p.payload.begin(), p.payload.begin() + n, out.begin());
            return out;
        }
    }
    throw NotQuic("flow has no QUIC long-header packet");
}

// ---- labeling -------------------------------------------------------------------

LabelTable LabelTable::from_lines(const std::vector<std::string>& lines) {
    LabelTable t;
    std::map<std::string, int64_t> class_index;
    for (const std::string& line : lines) {
        if (line.empty() || line[0] == '#') continue;
        auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw ParseError("label-table line missing comma: " + line);
        Entry e;
        e.pattern = line.substr(0, comma);
        e.class_name = line.substr(comma + 1);
        try {
            e.re = std::regex(e.pattern);
        } catch (const std::regex_error& err) {
            throw ParseError("bad label pattern '" + e.pattern +
                             "': " + err.what());
        }
        auto it = class_index.find(e.class_name);
        if (it == class_index.end()) {
            it = class_index.emplace(e.class_name, t.class_names.size()).first;
            t.class_names.push_back(e.class_name);
        }
        e.class_index = it->second;
        t.entries.push_back(std::move(e));
    }
    return t;
}

LabelTable LabelTable::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open label table: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return from_lines(lines);
}

std::optional<int64_t> LabelTable::match(const std::string& sni) const {
    for (const Entry& e : entries)
        if (std::regex_search(sni, e.re)) return e.class_index;
    return std::nullopt;
}

LabeledFlows label_flows(const std::vector<Flow>& flows,
                         const LabelTable& table, double time_window_s) {
    LabeledFlows out;
    out.labels.assign(flows.size(), std::nullopt);
    // direct SNI matches first
    for (size_t i = 0; i < flows.size(); ++i)
        if (flows[i].sni) out.labels[i] = table.match(*flows[i].sni);
    // adjacency: session-id match, else close start time from the same client
    for (size_t i = 0; i < flows.size(); ++i) {
        if (out.labels[i]) continue;
        for (size_t j = 0; j < flows.size(); ++j) {
            if (j == i || !out.labels[j] || !flows[j].sni) continue;
            bool session_match = !flows[i].session_id.empty() &&
                                 flows[i].session_id == flows[j].session_id;
            bool time_match =
                std::abs(flows[i].first_ts - flows[j].first_ts) <=
                    time_window_s &&
                flows[i].client_ip == flows[j].client_ip;
            if (session_match || time_match) {
                out.labels[i] = out.labels[j];
                out.inherited++;
                break;
            }
        }
    }
    for (const auto& l : out.labels)
        (l ? out.labeled : out.unlabeled)++;
    return out;
}

void obfuscate(std::vector<uint8_t>& bytes,
               const std::vector<ByteRange>& ranges) {
    for (const ByteRange& r : ranges)
        for (size_t i = r.begin; i < r.end && i < bytes.size(); ++i)
            bytes[i] = 0;
}

// ---- pipeline --------------------------------------------------------------------

PreprocessResult preprocess_pcaps(const std::vector<std::string>& pcap_paths,
                                  const LabelTable& table,
                                  double idle_timeout_s, double time_window_s,
                                  uint64_t hash_salt) {
    PreprocessResult out;
    out.dataset.class_names = table.class_names;

    struct Extracted {
        std::vector<uint8_t> bytes;
        std::vector<ByteRange> ranges;
        size_t flow_index;
    };

    std::vector<Flow> flows;
    for (const std::string& path : pcap_paths) {
        auto pcap = read_pcap(path);
        out.counters.packets += static_cast<int64_t>(pcap.packets.size());
        out.counters.skipped_non_ip += pcap.skipped_non_ip;
        out.counters.skipped_truncated += pcap.skipped_truncated;
        auto file_flows = assemble_flows(pcap.packets, idle_timeout_s);
        for (auto& f : file_flows) flows.push_back(std::move(f));
    }
    out.counters.flows = static_cast<int64_t>(flows.size());

    std::vector<Extracted> extracted;
    bool any_tls = false;
    for (size_t i = 0; i < flows.size(); ++i) {
        Flow& f = flows[i];
        try {
            if (f.key.protocol == Transport::TCP) {
                auto feats = extract_tls_features(f);
                f.sni = feats.sni;
                f.session_id = feats.session_id;
                extracted.push_back(
                    {std::move(feats.bytes), feats.obfuscation_ranges, i});
                any_tls = true;
            } else {
                extracted.push_back({extract_quic_features(f), {}, i});
            }
        } catch (const NoHandshakeFound&) {
            out.counters.skipped_no_handshake++;
        } catch (const NotQuic&) {
            out.counters.skipped_no_handshake++;
        }
    }

    auto labeled = label_flows(flows, table, time_window_s);
    int64_t feature_len = any_tls ? 1800 : 600;
    out.dataset.feature_len = feature_len;
    for (auto& e : extracted) {
        auto label = labeled.labels[e.flow_index];
        if (!label) {
            out.counters.unlabeled++;
            continue;
        }
        obfuscate(e.bytes, e.ranges);
        e.bytes.resize(feature_len, 0); // pad short (QUIC) rows when mixed
        out.dataset.features.push_back(std::move(e.bytes));
        out.dataset.labels.push_back(*label);
        out.flow_hashes.push_back(
            salted_flow_hash(flows[e.flow_index].key, hash_salt));
        out.counters.labeled++;
    }
    return out;
}

} // namespace etcnas
