#pragma once

// Hand-built pcap / TLS / QUIC byte fixtures shared by the ingest tests and
// the acceptance suite. Every field is written out explicitly so the
// expected values are visible at the byte level.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace fixtures {

inline void u16be(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

inline void u32le(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

inline void u32be(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 3; i >= 0; --i)
        v.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

// classic pcap global header, microsecond timestamps, Ethernet link type
inline std::vector<uint8_t> pcap_header(bool swapped = false) {
    std::vector<uint8_t> v;
    if (swapped) {
        // big-endian writer: every header field is byte-swapped
        u32be(v, 0xa1b2c3d4);
        u16be(v, 2);
        u16be(v, 4);
        u32be(v, 0);
        u32be(v, 0);
        u32be(v, 65535);
        u32be(v, 1);
    } else {
        u32le(v, 0xa1b2c3d4);
        v.push_back(2);
        v.push_back(0);
        v.push_back(4);
        v.push_back(0); // version 2.4
        u32le(v, 0);
        u32le(v, 0);
        u32le(v, 65535);
        u32le(v, 1);
    }
    return v;
}

struct Endpoint {
    uint32_t ip;
    uint16_t port;
};

// Ethernet + IPv4 + TCP/UDP frame carrying `payload`
inline std::vector<uint8_t> frame(const Endpoint& src, const Endpoint& dst,
                                  uint8_t proto,
                                  const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> f;
    for (int i = 0; i < 6; ++i) f.push_back(0xaa); // dst mac
    for (int i = 0; i < 6; ++i) f.push_back(0xbb); // src mac
    u16be(f, 0x0800);                              // IPv4

    uint16_t transport_len =
        static_cast<uint16_t>((proto == 6 ? 20 : 8) + payload.size());
    f.push_back(0x45); // version 4, ihl 5
    f.push_back(0);
    u16be(f, static_cast<uint16_t>(20 + transport_len)); // total length
    u16be(f, 0);                                         // id
    u16be(f, 0x4000);                                    // don't fragment
    f.push_back(64);                                     // ttl
    f.push_back(proto);
    u16be(f, 0); // checksum (unchecked)
    u32be(f, src.ip);
    u32be(f, dst.ip);

    if (proto == 6) { // TCP
        u16be(f, src.port);
        u16be(f, dst.port);
        u32be(f, 1000); // seq
        u32be(f, 0);    // ack
        f.push_back(5 << 4);
        f.push_back(0x18); // PSH|ACK
        u16be(f, 65535);
        u16be(f, 0);
        u16be(f, 0);
    } else { // UDP
        u16be(f, src.port);
        u16be(f, dst.port);
        u16be(f, static_cast<uint16_t>(8 + payload.size()));
        u16be(f, 0);
    }
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

inline void add_packet(std::vector<uint8_t>& pcap, uint32_t ts_sec,
                       uint32_t ts_usec, const std::vector<uint8_t>& fr,
                       bool swapped = false) {
    if (swapped) {
        u32be(pcap, ts_sec);
        u32be(pcap, ts_usec);
        u32be(pcap, static_cast<uint32_t>(fr.size()));
        u32be(pcap, static_cast<uint32_t>(fr.size()));
    } else {
        u32le(pcap, ts_sec);
        u32le(pcap, ts_usec);
        u32le(pcap, static_cast<uint32_t>(fr.size()));
        u32le(pcap, static_cast<uint32_t>(fr.size()));
    }
    pcap.insert(pcap.end(), fr.begin(), fr.end());
}

// TLS 1.2 record carrying a ClientHello with the given SNI and session id
inline std::vector<uint8_t> client_hello(const std::string& sni,
                                         const std::vector<uint8_t>& session_id,
                                         int num_ciphers = 4) {
    std::vector<uint8_t> body;
    body.push_back(3);
    body.push_back(3); // client version TLS 1.2
    for (int i = 0; i < 32; ++i) body.push_back(static_cast<uint8_t>(i)); // random
    body.push_back(static_cast<uint8_t>(session_id.size()));
    body.insert(body.end(), session_id.begin(), session_id.end());
    u16be(body, static_cast<uint16_t>(num_ciphers * 2));
    for (int i = 0; i < num_ciphers; ++i)
        u16be(body, static_cast<uint16_t>(0x1301 + i));
    body.push_back(1); // one compression method
    body.push_back(0); // null

    std::vector<uint8_t> ext;
    u16be(ext, 0); // server_name extension
    uint16_t name_len = static_cast<uint16_t>(sni.size());
    u16be(ext, static_cast<uint16_t>(5 + name_len)); // extension length
    u16be(ext, static_cast<uint16_t>(3 + name_len)); // server-name list length
    ext.push_back(0);                                // host_name
    u16be(ext, name_len);
    ext.insert(ext.end(), sni.begin(), sni.end());

    u16be(body, static_cast<uint16_t>(ext.size()));
    body.insert(body.end(), ext.begin(), ext.end());

    std::vector<uint8_t> hs;
    hs.push_back(1); // ClientHello
    hs.push_back(0);
    u16be(hs, static_cast<uint16_t>(body.size())); // 24-bit length
    hs.insert(hs.end(), body.begin(), body.end());

    std::vector<uint8_t> rec;
    rec.push_back(22); // handshake
    rec.push_back(3);
    rec.push_back(1);
    u16be(rec, static_cast<uint16_t>(hs.size()));
    rec.insert(rec.end(), hs.begin(), hs.end());
    return rec;
}

inline std::vector<uint8_t> server_hello_stub() {
    // handshake record with a ServerHello-typed body (content unparsed)
    std::vector<uint8_t> rec = {22, 3, 3, 0, 8, 2, 0, 0, 4, 3, 3, 0, 0};
    return rec;
}

inline std::vector<uint8_t> app_data_record(size_t n) {
    std::vector<uint8_t> rec = {23, 3, 3};
    u16be(rec, static_cast<uint16_t>(n));
    for (size_t i = 0; i < n; ++i) rec.push_back(0x55);
    return rec;
}

// QUIC v1 long-header Initial packet stub
inline std::vector<uint8_t> quic_initial(size_t total_len = 1200) {
    std::vector<uint8_t> p;
    p.push_back(0xc3); // long header, Initial
    u32be(p, 0x00000001); // version 1
    p.push_back(8);       // dcid length
    for (int i = 0; i < 8; ++i) p.push_back(static_cast<uint8_t>(0x10 + i));
    p.push_back(0); // empty scid
    while (p.size() < total_len) p.push_back(0xeb);
    return p;
}

inline void write_file(const std::string& path,
                       const std::vector<uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

} // namespace fixtures
