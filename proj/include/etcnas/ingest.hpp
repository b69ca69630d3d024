#pragma once

// PCAP -> labeled fixed-length byte datasets: packet parsing, bidirectional
// flow reassembly, TLS/QUIC handshake extraction, SNI-based labeling,
// obfuscation and dataset emission.

#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "etcnas/dataset.hpp"
#include "etcnas/errors.hpp"

namespace etcnas {

enum class Transport : uint8_t { TCP = 6, UDP = 17 };

struct PacketRecord {
    double timestamp = 0.0; // seconds, fractional
    std::string src_ip;
    std::string dst_ip;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    Transport protocol = Transport::TCP;
    std::vector<uint8_t> payload; // transport payload
};

struct PcapReadResult {
    std::vector<PacketRecord> packets;
    int64_t skipped_non_ip = 0;
    int64_t skipped_truncated = 0;
    int64_t skipped_non_transport = 0;
};

PcapReadResult read_pcap(const std::string& path);

// Bidirectional canonical 5-tuple: the lexicographically smaller endpoint
// comes first, so both directions map to one key.
struct FlowKey {
    std::string ip_a, ip_b;
    uint16_t port_a = 0, port_b = 0;
    Transport protocol = Transport::TCP;

    bool operator==(const FlowKey&) const = default;
    auto operator<=>(const FlowKey&) const = default;
};

FlowKey canonical_key(const PacketRecord& p);
uint64_t salted_flow_hash(const FlowKey& key, uint64_t salt);

struct Flow {
    FlowKey key;
    std::vector<PacketRecord> packets; // time-ordered
    double first_ts = 0.0;
    double last_ts = 0.0;
    std::string client_ip; // initiator endpoint
    std::vector<uint8_t> session_id;
    std::optional<std::string> sni;
};

std::vector<Flow> assemble_flows(const std::vector<PacketRecord>& packets,
                                 double idle_timeout_s = 60.0);

// ---- handshake feature extraction -------------------------------------------

struct ByteRange {
    size_t begin = 0;
    size_t end = 0; // half-open
};

struct HandshakeFeatures {
    std::vector<uint8_t> bytes; // exactly packets * cutoff, zero-padded
    std::optional<std::string> sni;
    std::vector<uint8_t> session_id;
    std::vector<ByteRange> obfuscation_ranges; // SNI + cipher list regions
};

// First three packets carrying TLS handshake records, each cut/zero-padded to
// `cutoff` bytes starting at the TLS record header, concatenated.
HandshakeFeatures extract_tls_features(const Flow& flow, int64_t cutoff = 600);

// First long-header Initial packet of a QUIC flow, cut/zero-padded to cutoff.
std::vector<uint8_t> extract_quic_features(const Flow& flow,
                                           int64_t cutoff = 600);

// ---- labeling ----------------------------------------------------------------

struct LabelTable {
    struct Entry {
        std::string pattern;
        std::regex re;
        std::string class_name;
        int64_t class_index = 0;
    };
    std::vector<Entry> entries; // first match wins
    std::vector<std::string> class_names;

    static LabelTable from_lines(const std::vector<std::string>& lines);
    static LabelTable from_file(const std::string& path);
    std::optional<int64_t> match(const std::string& sni) const;
};

struct LabeledFlows {
    std::vector<std::optional<int64_t>> labels; // parallel to flows
    int64_t labeled = 0;
    int64_t inherited = 0;
    int64_t unlabeled = 0;
};

// SNI-matched labels plus adjacency propagation: unlabeled flows inherit the
// label of a flow sharing a TLS session-id, else of one starting within
// `time_window_s` from the same client endpoint.
LabeledFlows label_flows(const std::vector<Flow>& flows,
                         const LabelTable& table,
                         double time_window_s = 1.0);

// Zeroes the given regions in place; idempotent.
void obfuscate(std::vector<uint8_t>& bytes,
               const std::vector<ByteRange>& ranges);

// ---- end-to-end pipeline ------------------------------------------------------

struct PreprocessCounters {
    int64_t packets = 0;
    int64_t flows = 0;
    int64_t labeled = 0;
    int64_t unlabeled = 0;
    int64_t skipped_no_handshake = 0;
    int64_t skipped_non_ip = 0;
    int64_t skipped_truncated = 0;
};

struct PreprocessResult {
    ByteDataset dataset;
    std::vector<uint64_t> flow_hashes; // salted; parallel to dataset rows
    PreprocessCounters counters;
};

PreprocessResult preprocess_pcaps(const std::vector<std::string>& pcap_paths,
                                  const LabelTable& table,
                                  double idle_timeout_s = 60.0,
                                  double time_window_s = 1.0,
                                  uint64_t hash_salt = 0);

} // namespace etcnas
