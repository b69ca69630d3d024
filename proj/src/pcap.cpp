#include "etcnas/ingest.hpp"

#include <cstring>
#include <fstream>

namespace etcnas {

namespace {

constexpr uint32_t kMagicMicro = 0xa1b2c3d4;
constexpr uint32_t kMagicMicroSwapped = 0xd4c3b2a1;
constexpr uint32_t kMagicNano = 0xa1b23c4d;
constexpr uint32_t kMagicNanoSwapped = 0x4d3cb2a1;

struct Reader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;
    bool swapped = false;

    bool has(size_t n) const { return pos + n <= len; }
    uint8_t u8() { return p[pos++]; }
    uint16_t u16le() {
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        if (swapped) v = static_cast<uint16_t>((v >> 8) | (v << 8));
        pos += 2;
        return v;
    }
    uint32_t u32le() {
        uint32_t v;
        std::memcpy(&v, p + pos, 4);
        if (swapped) v = __builtin_bswap32(v);
        pos += 4;
        return v;
    }
    uint16_t u16be() {
        uint16_t v = static_cast<uint16_t>((p[pos] << 8) | p[pos + 1]);
        pos += 2;
        return v;
    }
};

std::string ipv4_str(const uint8_t* b) {
    return std::to_string(b[0]) + "." + std::to_string(b[1]) + "." +
           std::to_string(b[2]) + "." + std::to_string(b[3]);
}

std::string ipv6_str(const uint8_t* b) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < 16; ++i) {
        if (i && i % 2 == 0) s.push_back(':');
        s.push_back(hex[b[i] >> 4]);
        s.push_back(hex[b[i] & 0xf]);
    }
    return s;
}

} // namespace

PcapReadResult read_pcap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open pcap: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 24) throw BadMagic("pcap too short: " + path);

    Reader r{buf.data(), buf.size()};
    uint32_t magic;
    std::memcpy(&magic, buf.data(), 4);
    r.pos = 4;
    bool nano = false;
    if (magic == kMagicMicro) {
    } else if (magic == kMagicNano) {
        nano = true;
    } else if (magic == kMagicMicroSwapped) {
        r.swapped = true;
    } else if (magic == kMagicNanoSwapped) {
        r.swapped = true;
        nano = true;
    } else {
        throw BadMagic("unrecognized pcap magic in " + path);
    }
    r.u16le(); // version major
    r.u16le(); // version minor
    r.u32le(); // thiszone
    r.u32le(); // sigfigs
    r.u32le(); // snaplen
    uint32_t linktype = r.u32le();
    if (linktype != 1) // Ethernet
        throw UnsupportedLinkType("unsupported pcap link type " +
                                  std::to_string(linktype));

    PcapReadResult out;
    double frac_scale = nano ? 1e-9 : 1e-6;
    while (r.has(16)) {
        uint32_t ts_sec = r.u32le();
        uint32_t ts_frac = r.u32le();
        uint32_t incl_len = r.u32le();
        r.u32le(); // orig_len
        if (!r.has(incl_len)) {
            out.skipped_truncated++;
            break;
        }
        size_t frame_start = r.pos;
        size_t frame_end = frame_start + incl_len;
        r.pos = frame_end;

        const uint8_t* f = buf.data() + frame_start;
        size_t flen = incl_len;
        if (flen < 14) {
            out.skipped_truncated++;
            continue;
        }
        uint16_t ethertype = static_cast<uint16_t>((f[12] << 8) | f[13]);
        size_t ip_off = 14;

        PacketRecord pkt;
        pkt.timestamp = static_cast<double>(ts_sec) +
                        static_cast<double>(ts_frac) * frac_scale;
        uint8_t proto = 0;
        size_t tp_off = 0;

        if (ethertype == 0x0800) { // IPv4
            if (flen < ip_off + 20) {
                out.skipped_truncated++;
                continue;
            }
            const uint8_t* ip = f + ip_off;
            size_t ihl = (ip[0] & 0x0f) * 4;
            uint16_t total_len = static_cast<uint16_t>((ip[2] << 8) | ip[3]);
            if (flen < ip_off + ihl || total_len < ihl) {
                out.skipped_truncated++;
                continue;
            }
            proto = ip[9];
            pkt.src_ip = ipv4_str(ip + 12);
            pkt.dst_ip = ipv4_str(ip + 16);
            tp_off = ip_off + ihl;
            flen = std::min(flen, ip_off + total_len);
        } else if (ethertype == 0x86dd) { // IPv6
            if (flen < ip_off + 40) {
                out.skipped_truncated++;
                continue;
            }
            const uint8_t* ip = f + ip_off;
            proto = ip[6];
            uint16_t payload_len = static_cast<uint16_t>((ip[4] << 8) | ip[5]);
            pkt.src_ip = ipv6_str(ip + 8);
            pkt.dst_ip = ipv6_str(ip + 24);
            tp_off = ip_off + 40;
            flen = std::min(flen, tp_off + payload_len);
        } else {
            out.skipped_non_ip++;
            continue;
        }

        if (proto == 6) { // TCP
            if (flen < tp_off + 20) {
                out.skipped_truncated++;
                continue;
            }
            const uint8_t* tcp = f + tp_off;
            pkt.protocol = Transport::TCP;
            pkt.src_port = static_cast<uint16_t>((tcp[0] << 8) | tcp[1]);
            pkt.dst_port = static_cast<uint16_t>((tcp[2] << 8) | tcp[3]);
            size_t doff = (tcp[12] >> 4) * 4;
            size_t pl_off = tp_off + doff;
            if (pl_off <= flen)
                pkt.payload.assign(f + pl_off, f + flen);
        } else if (proto == 17) { // UDP
            if (flen < tp_off + 8) {
                out.skipped_truncated++;
                continue;
            }
            const uint8_t* udp = f + tp_off;
            pkt.protocol = Transport::UDP;
            pkt.src_port = static_cast<uint16_t>((udp[0] << 8) | udp[1]);
            pkt.dst_port = static_cast<uint16_t>((udp[2] << 8) | udp[3]);
            size_t pl_off = tp_off + 8;
            if (pl_off <= flen)
                pkt.payload.assign(f + pl_off, f + flen);
        } else {
            out.skipped_non_transport++;
            continue;
        }
        out.packets.push_back(std::move(pkt));
    }
    return out;
}

} // namespace etcnas
