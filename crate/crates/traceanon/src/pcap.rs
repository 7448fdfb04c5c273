//! Classic libpcap container handling and bit-exact field access.
//!
//! A [`Trace`] keeps every byte it was parsed from: serializing an
//! unmodified trace reproduces the input file exactly, and [`set_field`]
//! touches nothing outside the addressed bit range. Checksums are never
//! recomputed implicitly — `IPV4_CHECKSUM`, `TCP_CHECKSUM` and friends are
//! ordinary rewritable fields, and fixing them up behind the caller's back
//! would change bytes nobody asked to change. Call
//! [`Trace::recompute_checksums`] when corrected checksums are wanted.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use thiserror::Error;

use crate::field::{DataType, FieldPath, FieldValue, Timestamp};

const PCAP_MAGIC: [u8; 4] = [0xa1, 0xb2, 0xc3, 0xd4];
const PCAP_MAGIC_SWAPPED: [u8; 4] = [0xd4, 0xc3, 0xb2, 0xa1];
const PCAP_MAGIC_NSEC: [u8; 4] = [0xa1, 0xb2, 0x3c, 0x4d];
const PCAP_MAGIC_NSEC_SWAPPED: [u8; 4] = [0x4d, 0x3c, 0xb2, 0xa1];

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

const IPPROTO_ICMP: u8 = 1;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;

#[derive(Debug, Error)]
pub enum PcapError {
    /// The stream does not start with a supported pcap magic. Nanosecond
    /// variants are deliberately unsupported.
    #[error("not a microsecond libpcap capture (bad magic)")]
    BadMagic,
    #[error("truncated record: {0}")]
    TruncatedRecord(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("field {0} is not present in this packet")]
    FieldAbsent(FieldPath),
    #[error("width mismatch on {path}: field holds {expected} bits, value needs {got}")]
    WidthMismatch {
        path: FieldPath,
        expected: usize,
        got: usize,
    },
}

/// Byte order of the capture file's own headers.
///
/// `Native` files spell the magic as `a1 b2 c3 d4` and store header integers
/// big-endian; `Swapped` files (the common x86 tcpdump output) store them
/// little-endian. Frame contents are network order either way.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ByteOrder {
    Native,
    Swapped,
}

/// Transport protocols the anonymization pipeline understands.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Transport {
    Tcp,
    Udp,
    Icmp,
}

impl Transport {
    pub fn name(self) -> &'static str {
        match self {
            Transport::Tcp => "TCP",
            Transport::Udp => "UDP",
            Transport::Icmp => "ICMP",
        }
    }
}

/// Location of one field inside a frame, in bits from the frame start.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BitSpan {
    pub bit_offset: usize,
    pub bit_width: usize,
}

impl BitSpan {
    fn new(bit_offset: usize, bit_width: usize) -> BitSpan {
        BitSpan {
            bit_offset,
            bit_width,
        }
    }

    fn at_byte(byte_offset: usize, bit_width: usize) -> BitSpan {
        BitSpan::new(byte_offset * 8, bit_width)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.bit_offset..self.bit_offset + self.bit_width
    }
}

/// Byte offsets of the protocol layers found in a frame, kept for the
/// detection engine and checksum repair. Absent for unparseable packets.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Anatomy {
    pub ip_start: usize,
    pub ip_header_len: usize,
    pub transport: Option<Transport>,
    pub transport_start: Option<usize>,
    pub payload_start: Option<usize>,
}

/// One captured packet: record header fields, raw frame bytes, and the map
/// of addressable fields valid for this frame.
#[derive(Clone, Debug)]
pub struct PacketRecord {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub original_len: u32,
    pub frame: Vec<u8>,
    pub layout: BTreeMap<FieldPath, BitSpan>,
    pub(crate) anatomy: Option<Anatomy>,
}

impl PacketRecord {
    /// Builds a record from a raw Ethernet frame, deriving the field layout.
    pub fn from_ethernet(ts_sec: u32, ts_usec: u32, frame: Vec<u8>) -> PacketRecord {
        let original_len = frame.len() as u32;
        let (layout, anatomy) = build_layout(&frame);
        PacketRecord {
            ts_sec,
            ts_usec,
            original_len,
            frame,
            layout,
            anatomy,
        }
    }

    pub fn captured_len(&self) -> u32 {
        self.frame.len() as u32
    }

    pub fn transport(&self) -> Option<Transport> {
        self.anatomy.and_then(|a| a.transport)
    }

    /// True when `path` can be read from or written to this packet.
    pub fn has_field(&self, path: FieldPath) -> bool {
        matches!(path, FieldPath::TsSec | FieldPath::TsUsec) || self.layout.contains_key(&path)
    }

    pub fn timestamp(&self) -> Timestamp {
        Timestamp::new(self.ts_sec as i64, self.ts_usec as i64)
    }
}

/// A parsed capture file.
#[derive(Clone, Debug)]
pub struct Trace {
    pub link_type: u32,
    pub snap_len: u32,
    pub byte_order: ByteOrder,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub packets: Vec<PacketRecord>,
}

impl Trace {
    /// An empty Ethernet trace with conventional header values, in the
    /// byte order tcpdump emits on little-endian hosts.
    pub fn new_ethernet() -> Trace {
        Trace {
            link_type: 1,
            snap_len: 65_535,
            byte_order: ByteOrder::Swapped,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            packets: Vec::new(),
        }
    }

    /// Builds a trace from raw Ethernet frames with derived field layouts.
    pub fn from_ethernet_frames<I>(frames: I) -> Trace
    where
        I: IntoIterator<Item = (u32, u32, Vec<u8>)>,
    {
        let mut trace = Trace::new_ethernet();
        trace.packets = frames
            .into_iter()
            .map(|(s, u, f)| PacketRecord::from_ethernet(s, u, f))
            .collect();
        trace
    }

    /// Recomputes IPv4/TCP/UDP/ICMP checksums on every packet whose relevant
    /// bytes are fully captured. Opt-in repair for non-measurement uses.
    pub fn recompute_checksums(&mut self) {
        for packet in &mut self.packets {
            recompute_packet_checksums(packet);
        }
    }
}

/// Parses a classic libpcap stream.
///
/// Packets that are not Ethernet/IPv4/{TCP,UDP,ICMP} are retained with an
/// empty layout rather than dropped.
pub fn parse_pcap(bytes: &[u8]) -> Result<Trace, PcapError> {
    if bytes.len() < 4 {
        return Err(PcapError::BadMagic);
    }
    let byte_order = match <[u8; 4]>::try_from(&bytes[0..4]).unwrap() {
        PCAP_MAGIC => ByteOrder::Native,
        PCAP_MAGIC_SWAPPED => ByteOrder::Swapped,
        PCAP_MAGIC_NSEC | PCAP_MAGIC_NSEC_SWAPPED => return Err(PcapError::BadMagic),
        _ => return Err(PcapError::BadMagic),
    };
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(PcapError::TruncatedRecord(format!(
            "global header needs {GLOBAL_HEADER_LEN} bytes, have {}",
            bytes.len()
        )));
    }

    let rd16 = |off: usize| read_u16(&bytes[off..off + 2], byte_order);
    let rd32 = |off: usize| read_u32(&bytes[off..off + 4], byte_order);

    let mut trace = Trace {
        link_type: rd32(20),
        snap_len: rd32(16),
        byte_order,
        version_major: rd16(4),
        version_minor: rd16(6),
        thiszone: rd32(8) as i32,
        sigfigs: rd32(12),
        packets: Vec::new(),
    };

    let mut pos = GLOBAL_HEADER_LEN;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecord(format!(
                "record header at offset {pos} exceeds remaining {} bytes",
                bytes.len() - pos
            )));
        }
        let ts_sec = read_u32(&bytes[pos..pos + 4], byte_order);
        let ts_usec = read_u32(&bytes[pos + 4..pos + 8], byte_order);
        let captured_len = read_u32(&bytes[pos + 8..pos + 12], byte_order) as usize;
        let original_len = read_u32(&bytes[pos + 12..pos + 16], byte_order);
        pos += RECORD_HEADER_LEN;
        if bytes.len() - pos < captured_len {
            return Err(PcapError::TruncatedRecord(format!(
                "record data of {captured_len} bytes exceeds remaining {}",
                bytes.len() - pos
            )));
        }
        let frame = bytes[pos..pos + captured_len].to_vec();
        pos += captured_len;

        let (layout, anatomy) = if trace.link_type == 1 {
            build_layout(&frame)
        } else {
            (BTreeMap::new(), None)
        };
        trace.packets.push(PacketRecord {
            ts_sec,
            ts_usec,
            original_len,
            frame,
            layout,
            anatomy,
        });
    }
    Ok(trace)
}

/// Serializes a trace back to classic libpcap bytes.
///
/// For any well-formed input, `write_pcap(&parse_pcap(x)?) == x`.
pub fn write_pcap(trace: &Trace) -> Vec<u8> {
    let total: usize = GLOBAL_HEADER_LEN
        + trace
            .packets
            .iter()
            .map(|p| RECORD_HEADER_LEN + p.frame.len())
            .sum::<usize>();
    let mut out = Vec::with_capacity(total);
    let bo = trace.byte_order;

    match bo {
        ByteOrder::Native => out.extend_from_slice(&PCAP_MAGIC),
        ByteOrder::Swapped => out.extend_from_slice(&PCAP_MAGIC_SWAPPED),
    }
    put_u16(&mut out, trace.version_major, bo);
    put_u16(&mut out, trace.version_minor, bo);
    put_u32(&mut out, trace.thiszone as u32, bo);
    put_u32(&mut out, trace.sigfigs, bo);
    put_u32(&mut out, trace.snap_len, bo);
    put_u32(&mut out, trace.link_type, bo);

    for packet in &trace.packets {
        put_u32(&mut out, packet.ts_sec, bo);
        put_u32(&mut out, packet.ts_usec, bo);
        put_u32(&mut out, packet.captured_len(), bo);
        put_u32(&mut out, packet.original_len, bo);
        out.extend_from_slice(&packet.frame);
    }
    out
}

/// Keeps only packets whose transport protocol is in `keep`; everything
/// else — including non-IPv4 and unparseable packets — is dropped. Order
/// is preserved.
pub fn filter_protocols(trace: &Trace, keep: &[Transport]) -> Trace {
    let mut out = trace.clone();
    out.packets = trace
        .packets
        .iter()
        .filter(|p| p.transport().is_some_and(|t| keep.contains(&t)))
        .cloned()
        .collect();
    out
}

/// Decodes `path` from `packet` according to its declared data type.
/// Multi-byte frame fields are network byte order.
pub fn get_field(packet: &PacketRecord, path: FieldPath) -> Result<FieldValue, FieldError> {
    match path {
        // The two record-header paths carry the full per-component
        // timestamp: TS_SEC the whole-second instant, TS_USEC the
        // sub-second remainder on its own.
        FieldPath::TsSec => Ok(FieldValue::Timestamp(Timestamp::new(
            packet.ts_sec as i64,
            0,
        ))),
        FieldPath::TsUsec => Ok(FieldValue::Timestamp(Timestamp::new(
            0,
            packet.ts_usec as i64,
        ))),
        _ => {
            let span = packet
                .layout
                .get(&path)
                .ok_or(FieldError::FieldAbsent(path))?;
            let slice = &packet.frame.view_bits::<Msb0>()[span.range()];
            match path.data_type() {
                DataType::Binary => Ok(FieldValue::Bits(slice.to_bitvec())),
                DataType::Numeric => Ok(FieldValue::number(slice.load_be::<u64>())),
                DataType::Timestamp => unreachable!("timestamp paths live in the record header"),
            }
        }
    }
}

/// Writes `value` into `path`, returning the rewritten record.
///
/// Exactly the addressed bits change; checksums are left as-is.
pub fn set_field(
    packet: &PacketRecord,
    path: FieldPath,
    value: &FieldValue,
) -> Result<PacketRecord, FieldError> {
    let mut out = packet.clone();
    match path {
        FieldPath::TsSec | FieldPath::TsUsec => {
            let ts = match value {
                FieldValue::Timestamp(ts) => *ts,
                _ => {
                    return Err(FieldError::WidthMismatch {
                        path,
                        expected: 32,
                        got: value.width().unwrap_or(0),
                    })
                }
            };
            let component = if path == FieldPath::TsSec {
                ts.sec()
            } else {
                ts.usec()
            };
            let encoded = u32::try_from(component).map_err(|_| FieldError::WidthMismatch {
                path,
                expected: 32,
                got: 64,
            })?;
            if path == FieldPath::TsSec {
                out.ts_sec = encoded;
            } else {
                out.ts_usec = encoded;
            }
            Ok(out)
        }
        _ => {
            let span = *packet
                .layout
                .get(&path)
                .ok_or(FieldError::FieldAbsent(path))?;
            let bits = value
                .to_bits(span.bit_width)
                .ok_or(FieldError::WidthMismatch {
                    path,
                    expected: span.bit_width,
                    got: value.width().unwrap_or(65),
                })?;
            out.frame.view_bits_mut::<Msb0>()[span.range()].copy_from_bitslice(&bits);
            Ok(out)
        }
    }
}

fn read_u16(b: &[u8], bo: ByteOrder) -> u16 {
    let a = [b[0], b[1]];
    match bo {
        ByteOrder::Native => u16::from_be_bytes(a),
        ByteOrder::Swapped => u16::from_le_bytes(a),
    }
}

fn read_u32(b: &[u8], bo: ByteOrder) -> u32 {
    let a = [b[0], b[1], b[2], b[3]];
    match bo {
        ByteOrder::Native => u32::from_be_bytes(a),
        ByteOrder::Swapped => u32::from_le_bytes(a),
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16, bo: ByteOrder) {
    match bo {
        ByteOrder::Native => out.extend_from_slice(&v.to_be_bytes()),
        ByteOrder::Swapped => out.extend_from_slice(&v.to_le_bytes()),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32, bo: ByteOrder) {
    match bo {
        ByteOrder::Native => out.extend_from_slice(&v.to_be_bytes()),
        ByteOrder::Swapped => out.extend_from_slice(&v.to_le_bytes()),
    }
}

fn be16(frame: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([frame[off], frame[off + 1]])
}

/// Walks Ethernet → (VLAN)* → IPv4 → {TCP, UDP, ICMP} and records a bit
/// span for every field whose bytes are fully captured. Nothing is ever
/// rejected: missing layers just mean absent fields.
fn build_layout(frame: &[u8]) -> (BTreeMap<FieldPath, BitSpan>, Option<Anatomy>) {
    let mut layout = BTreeMap::new();
    if frame.len() < 14 {
        return (layout, None);
    }
    layout.insert(FieldPath::DstMac, BitSpan::at_byte(0, 48));
    layout.insert(FieldPath::SrcMac, BitSpan::at_byte(6, 48));

    // Skip stacked 802.1Q/802.1ad tags.
    let mut ethertype = be16(frame, 12);
    let mut ip_start = 14;
    while (ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ)
        && frame.len() >= ip_start + 4
    {
        ethertype = be16(frame, ip_start + 2);
        ip_start += 4;
    }
    if ethertype != ETHERTYPE_IPV4 || frame.len() < ip_start + 20 {
        return (layout, None);
    }
    let version = frame[ip_start] >> 4;
    let ihl = (frame[ip_start] & 0x0f) as usize;
    if version != 4 || ihl < 5 {
        return (layout, None);
    }

    layout.insert(FieldPath::Ipv4Id, BitSpan::at_byte(ip_start + 4, 16));
    layout.insert(
        FieldPath::Ipv4Offset,
        BitSpan::new((ip_start + 6) * 8 + 3, 13),
    );
    layout.insert(FieldPath::Ipv4Ttl, BitSpan::at_byte(ip_start + 8, 8));
    layout.insert(FieldPath::Ipv4Checksum, BitSpan::at_byte(ip_start + 10, 16));
    layout.insert(FieldPath::Ipv4SrcIp, BitSpan::at_byte(ip_start + 12, 32));
    layout.insert(FieldPath::Ipv4DstIp, BitSpan::at_byte(ip_start + 16, 32));

    let proto = frame[ip_start + 9];
    let transport = match proto {
        IPPROTO_TCP => Some(Transport::Tcp),
        IPPROTO_UDP => Some(Transport::Udp),
        IPPROTO_ICMP => Some(Transport::Icmp),
        _ => None,
    };
    let mut anatomy = Anatomy {
        ip_start,
        ip_header_len: ihl * 4,
        transport,
        transport_start: None,
        payload_start: None,
    };

    let fragment_offset = be16(frame, ip_start + 6) & 0x1fff;
    let t = ip_start + ihl * 4;
    // Only first fragments carry a transport header; fragment payloads and
    // captures cut inside the IP options stay header-only.
    if transport.is_none() || fragment_offset != 0 || frame.len() < t {
        return (layout, Some(anatomy));
    }
    anatomy.transport_start = Some(t);

    let fits = |off: usize, bytes: usize| frame.len() >= off + bytes;
    match transport.unwrap() {
        Transport::Tcp => {
            add_if(&mut layout, FieldPath::TcpSrcPort, t, 2, frame);
            add_if(&mut layout, FieldPath::TcpDstPort, t + 2, 2, frame);
            add_if(&mut layout, FieldPath::TcpSequence, t + 4, 4, frame);
            add_if(&mut layout, FieldPath::TcpAckNo, t + 8, 4, frame);
            add_if(&mut layout, FieldPath::TcpFlags, t + 13, 1, frame);
            add_if(&mut layout, FieldPath::TcpWindow, t + 14, 2, frame);
            add_if(&mut layout, FieldPath::TcpChecksum, t + 16, 2, frame);
            add_if(&mut layout, FieldPath::TcpUrgent, t + 18, 2, frame);
            if fits(t, 20) {
                let data_offset = (frame[t + 12] >> 4) as usize;
                if data_offset >= 5 {
                    let header_end = t + data_offset * 4;
                    if data_offset > 5 && frame.len() >= header_end {
                        layout.insert(
                            FieldPath::TcpOptions,
                            BitSpan::at_byte(t + 20, (data_offset * 4 - 20) * 8),
                        );
                    }
                    if frame.len() >= header_end {
                        anatomy.payload_start = Some(header_end);
                    }
                }
            }
        }
        Transport::Udp => {
            add_if(&mut layout, FieldPath::UdpSrcPort, t, 2, frame);
            add_if(&mut layout, FieldPath::UdpDstPort, t + 2, 2, frame);
            add_if(&mut layout, FieldPath::UdpChecksum, t + 6, 2, frame);
            if fits(t, 8) {
                anatomy.payload_start = Some(t + 8);
            }
        }
        Transport::Icmp => {
            add_if(&mut layout, FieldPath::IcmpType, t, 1, frame);
            add_if(&mut layout, FieldPath::IcmpCode, t + 1, 1, frame);
            add_if(&mut layout, FieldPath::IcmpChecksum, t + 2, 2, frame);
            if fits(t, 1) {
                build_icmp_body(&mut layout, &mut anatomy, frame, t, frame[t]);
            }
        }
    }
    (layout, Some(anatomy))
}

fn add_if(
    layout: &mut BTreeMap<FieldPath, BitSpan>,
    path: FieldPath,
    byte_offset: usize,
    byte_len: usize,
    frame: &[u8],
) {
    if frame.len() >= byte_offset + byte_len {
        layout.insert(path, BitSpan::at_byte(byte_offset, byte_len * 8));
    }
}

fn build_icmp_body(
    layout: &mut BTreeMap<FieldPath, BitSpan>,
    anatomy: &mut Anatomy,
    frame: &[u8],
    t: usize,
    icmp_type: u8,
) {
    match icmp_type {
        // Echo, timestamp, and information messages carry id/sequence.
        0 | 8 | 13 | 14 | 15 | 16 => {
            add_if(layout, FieldPath::IcmpIdentifier, t + 4, 2, frame);
            add_if(layout, FieldPath::IcmpSequence, t + 6, 2, frame);
            if icmp_type == 13 || icmp_type == 14 {
                add_if(layout, FieldPath::IcmpTsOrig, t + 8, 4, frame);
                add_if(layout, FieldPath::IcmpTsRec, t + 12, 4, frame);
                add_if(layout, FieldPath::IcmpTsTrans, t + 16, 4, frame);
                if frame.len() >= t + 20 {
                    anatomy.payload_start = Some(t + 20);
                }
            } else if frame.len() >= t + 8 {
                anatomy.payload_start = Some(t + 8);
            }
        }
        // Error messages embed the offending datagram after 8 bytes.
        3 | 4 | 5 | 11 | 12 => {
            if icmp_type == 5 {
                add_if(layout, FieldPath::IcmpGateway, t + 4, 4, frame);
            }
            if icmp_type == 12 {
                add_if(layout, FieldPath::IcmpPointer, t + 4, 1, frame);
            }
            let e = t + 8;
            let embedded_ok = frame.len() >= e + 20
                && frame[e] >> 4 == 4
                && (frame[e] & 0x0f) as usize >= 5;
            if embedded_ok {
                let eihl = (frame[e] & 0x0f) as usize;
                layout.insert(FieldPath::IcmpIpv4Id, BitSpan::at_byte(e + 4, 16));
                layout.insert(FieldPath::IcmpIpv4Offset, BitSpan::new((e + 6) * 8 + 3, 13));
                layout.insert(FieldPath::IcmpIpv4Ttl, BitSpan::at_byte(e + 8, 8));
                layout.insert(FieldPath::IcmpIpv4Checksum, BitSpan::at_byte(e + 10, 16));
                layout.insert(FieldPath::IcmpIpv4SrcIp, BitSpan::at_byte(e + 12, 32));
                layout.insert(FieldPath::IcmpIpv4DstIp, BitSpan::at_byte(e + 16, 32));
                let orig_start = e + eihl * 4;
                if frame.len() > orig_start {
                    layout.insert(
                        FieldPath::IcmpOrigData,
                        BitSpan::at_byte(orig_start, (frame.len() - orig_start) * 8),
                    );
                }
            } else if frame.len() > e {
                layout.insert(
                    FieldPath::IcmpOrigData,
                    BitSpan::at_byte(e, (frame.len() - e) * 8),
                );
            }
        }
        _ => {
            if frame.len() >= t + 8 {
                anatomy.payload_start = Some(t + 8);
            }
        }
    }
}

/// RFC 1071 ones'-complement checksum.
fn internet_checksum(words: impl Iterator<Item = u16>) -> u16 {
    let mut sum: u32 = 0;
    for w in words {
        sum += w as u32;
        if sum > 0xffff {
            sum = (sum & 0xffff) + (sum >> 16);
        }
    }
    !(sum as u16)
}

fn byte_words(bytes: &[u8]) -> impl Iterator<Item = u16> + '_ {
    bytes.chunks(2).map(|c| {
        if c.len() == 2 {
            u16::from_be_bytes([c[0], c[1]])
        } else {
            u16::from_be_bytes([c[0], 0])
        }
    })
}

fn recompute_packet_checksums(packet: &mut PacketRecord) {
    let Some(anatomy) = packet.anatomy else {
        return;
    };
    let ip = anatomy.ip_start;
    let ihl = anatomy.ip_header_len;
    if packet.frame.len() < ip + ihl {
        return;
    }

    // Transport checksum first so the IP checksum covers the final header.
    if let (Some(transport), Some(t)) = (anatomy.transport, anatomy.transport_start) {
        let total_len = be16(&packet.frame, ip + 2) as usize;
        let segment_end = ip + total_len;
        if segment_end >= t && packet.frame.len() >= segment_end {
            let cs_off = match transport {
                Transport::Tcp => Some(t + 16),
                Transport::Udp => Some(t + 6),
                Transport::Icmp => Some(t + 2),
            };
            if let Some(cs) = cs_off {
                if segment_end >= cs + 2 {
                    packet.frame[cs] = 0;
                    packet.frame[cs + 1] = 0;
                    let seg_len = segment_end - t;
                    let sum = match transport {
                        Transport::Icmp => {
                            internet_checksum(byte_words(&packet.frame[t..segment_end]))
                        }
                        _ => {
                            let f = &packet.frame;
                            let pseudo = [
                                be16(f, ip + 12),
                                be16(f, ip + 14),
                                be16(f, ip + 16),
                                be16(f, ip + 18),
                                f[ip + 9] as u16,
                                seg_len as u16,
                            ];
                            internet_checksum(
                                pseudo
                                    .iter()
                                    .copied()
                                    .chain(byte_words(&f[t..segment_end])),
                            )
                        }
                    };
                    let sum = if transport == Transport::Udp && sum == 0 {
                        0xffff
                    } else {
                        sum
                    };
                    packet.frame[cs..cs + 2].copy_from_slice(&sum.to_be_bytes());
                }
            }
        }
    }

    packet.frame[ip + 10] = 0;
    packet.frame[ip + 11] = 0;
    let sum = internet_checksum(byte_words(&packet.frame[ip..ip + ihl]));
    packet.frame[ip + 10..ip + 12].copy_from_slice(&sum.to_be_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Bits;

    /// Test-side frame assembly, kept independent of the layout builder.
    pub(crate) mod synth {
        pub fn eth(dst: [u8; 6], src: [u8; 6], ethertype: u16, payload: &[u8]) -> Vec<u8> {
            let mut f = Vec::new();
            f.extend_from_slice(&dst);
            f.extend_from_slice(&src);
            f.extend_from_slice(&ethertype.to_be_bytes());
            f.extend_from_slice(payload);
            f
        }

        #[allow(clippy::too_many_arguments)]
        pub fn ipv4(
            tos: u8,
            id: u16,
            flags_frag: u16,
            ttl: u8,
            proto: u8,
            src: [u8; 4],
            dst: [u8; 4],
            options: &[u8],
            payload: &[u8],
        ) -> Vec<u8> {
            assert_eq!(options.len() % 4, 0);
            let ihl = 5 + options.len() / 4;
            let total = ihl * 4 + payload.len();
            let mut p = Vec::new();
            p.push(0x40 | ihl as u8);
            p.push(tos);
            p.extend_from_slice(&(total as u16).to_be_bytes());
            p.extend_from_slice(&id.to_be_bytes());
            p.extend_from_slice(&flags_frag.to_be_bytes());
            p.push(ttl);
            p.push(proto);
            p.extend_from_slice(&[0xbe, 0xef]); // checksum placeholder
            p.extend_from_slice(&src);
            p.extend_from_slice(&dst);
            p.extend_from_slice(options);
            p.extend_from_slice(payload);
            p
        }

        #[allow(clippy::too_many_arguments)]
        pub fn tcp(
            sport: u16,
            dport: u16,
            seq: u32,
            ack: u32,
            flags: u8,
            window: u16,
            options: &[u8],
            payload: &[u8],
        ) -> Vec<u8> {
            assert_eq!(options.len() % 4, 0);
            let data_offset = 5 + options.len() / 4;
            let mut s = Vec::new();
            s.extend_from_slice(&sport.to_be_bytes());
            s.extend_from_slice(&dport.to_be_bytes());
            s.extend_from_slice(&seq.to_be_bytes());
            s.extend_from_slice(&ack.to_be_bytes());
            s.push((data_offset as u8) << 4);
            s.push(flags);
            s.extend_from_slice(&window.to_be_bytes());
            s.extend_from_slice(&[0x11, 0x22]); // checksum placeholder
            s.extend_from_slice(&[0, 0]); // urgent
            s.extend_from_slice(options);
            s.extend_from_slice(payload);
            s
        }

        pub fn udp(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
            let mut s = Vec::new();
            s.extend_from_slice(&sport.to_be_bytes());
            s.extend_from_slice(&dport.to_be_bytes());
            s.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
            s.extend_from_slice(&[0x33, 0x44]);
            s.extend_from_slice(payload);
            s
        }

        pub fn icmp_echo(id: u16, seq: u16, payload: &[u8]) -> Vec<u8> {
            let mut s = vec![8, 0, 0x55, 0x66];
            s.extend_from_slice(&id.to_be_bytes());
            s.extend_from_slice(&seq.to_be_bytes());
            s.extend_from_slice(payload);
            s
        }

        pub fn icmp_unreachable(embedded: &[u8]) -> Vec<u8> {
            let mut s = vec![3, 1, 0x77, 0x88, 0, 0, 0, 0];
            s.extend_from_slice(embedded);
            s
        }

        pub fn tcp_frame(src_ip: [u8; 4], dst_ip: [u8; 4], sport: u16, dport: u16) -> Vec<u8> {
            let seg = tcp(sport, dport, 1, 2, 0x18, 1024, &[], b"hi");
            let ip = ipv4(0, 7, 0x4000, 64, 6, src_ip, dst_ip, &[], &seg);
            eth([1, 2, 3, 4, 5, 6], [9, 8, 7, 6, 5, 4], 0x0800, &ip)
        }

        pub fn pcap_file_be(records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
            let mut out = vec![0xa1, 0xb2, 0xc3, 0xd4];
            out.extend_from_slice(&2u16.to_be_bytes());
            out.extend_from_slice(&4u16.to_be_bytes());
            out.extend_from_slice(&0u32.to_be_bytes());
            out.extend_from_slice(&0u32.to_be_bytes());
            out.extend_from_slice(&65535u32.to_be_bytes());
            out.extend_from_slice(&1u32.to_be_bytes());
            for (sec, usec, frame) in records {
                out.extend_from_slice(&sec.to_be_bytes());
                out.extend_from_slice(&usec.to_be_bytes());
                out.extend_from_slice(&(frame.len() as u32).to_be_bytes());
                out.extend_from_slice(&(frame.len() as u32).to_be_bytes());
                out.extend_from_slice(frame);
            }
            out
        }

        pub fn pcap_file_le(records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
            let mut out = vec![0xd4, 0xc3, 0xb2, 0xa1];
            out.extend_from_slice(&2u16.to_le_bytes());
            out.extend_from_slice(&4u16.to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            out.extend_from_slice(&65535u32.to_le_bytes());
            out.extend_from_slice(&1u32.to_le_bytes());
            for (sec, usec, frame) in records {
                out.extend_from_slice(&sec.to_le_bytes());
                out.extend_from_slice(&usec.to_le_bytes());
                out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
                out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
                out.extend_from_slice(frame);
            }
            out
        }
    }

    use synth::*;

    #[test]
    fn empty_file_parses_to_zero_packets() {
        let bytes = pcap_file_be(&[]);
        assert_eq!(bytes.len(), 24);
        let trace = parse_pcap(&bytes).unwrap();
        assert_eq!(trace.packets.len(), 0);
        assert_eq!(trace.byte_order, ByteOrder::Native);
        assert_eq!(write_pcap(&trace), bytes);
    }

    #[test]
    fn swapped_magic_decodes_swapped() {
        let frame = tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 4321, 515);
        let bytes = pcap_file_le(&[(952_425_600, 17, frame)]);
        let trace = parse_pcap(&bytes).unwrap();
        assert_eq!(trace.byte_order, ByteOrder::Swapped);
        assert_eq!(trace.snap_len, 65535);
        assert_eq!(trace.link_type, 1);
        assert_eq!(trace.packets[0].ts_sec, 952_425_600);
        assert_eq!(trace.packets[0].ts_usec, 17);
        assert_eq!(write_pcap(&trace), bytes);
    }

    #[test]
    fn nanosecond_magic_is_rejected() {
        for magic in [[0xa1, 0xb2, 0x3c, 0x4d], [0x4d, 0x3c, 0xb2, 0xa1]] {
            let mut bytes = pcap_file_be(&[]);
            bytes[0..4].copy_from_slice(&magic);
            assert!(matches!(parse_pcap(&bytes), Err(PcapError::BadMagic)));
        }
        assert!(matches!(parse_pcap(b"nope"), Err(PcapError::BadMagic)));
    }

    #[test]
    fn truncated_record_header_is_an_error() {
        let mut bytes = pcap_file_be(&[]);
        bytes.extend_from_slice(&[0u8; 10]);
        assert!(matches!(
            parse_pcap(&bytes),
            Err(PcapError::TruncatedRecord(_))
        ));

        let frame = tcp_frame([1, 1, 1, 1], [2, 2, 2, 2], 80, 80);
        let mut bytes = pcap_file_be(&[(0, 0, frame)]);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_pcap(&bytes),
            Err(PcapError::TruncatedRecord(_))
        ));
    }

    #[test]
    fn tcp_dst_port_sits_at_byte_36() {
        // Ethernet(14) + IPv4 without options(20) + 2 bytes into TCP.
        let frame = tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 4321, 515);
        let bytes = pcap_file_be(&[(0, 0, frame)]);
        let trace = parse_pcap(&bytes).unwrap();
        let span = trace.packets[0].layout[&FieldPath::TcpDstPort];
        assert_eq!(span.bit_offset, 36 * 8);
        assert_eq!(span.bit_width, 16);
        assert_eq!(
            get_field(&trace.packets[0], FieldPath::TcpDstPort).unwrap(),
            FieldValue::number(515)
        );
    }

    #[test]
    fn big_endian_port_decode() {
        let seg = tcp(1, 2, 0, 0, 0, 0, &[], &[]);
        let ip = ipv4(0, 0, 0, 64, 6, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
        let mut frame = eth([0; 6], [0; 6], 0x0800, &ip);
        // dst port bytes 0x02 0x03 -> 515
        frame[36] = 0x02;
        frame[37] = 0x03;
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        assert_eq!(
            get_field(&rec, FieldPath::TcpDstPort).unwrap(),
            FieldValue::number(515)
        );
    }

    #[test]
    fn missing_layers_mean_absent_fields() {
        let arp = eth([0; 6], [1; 6], 0x0806, &[0u8; 28]);
        let rec = PacketRecord::from_ethernet(0, 0, arp);
        assert_eq!(
            get_field(&rec, FieldPath::TcpSrcPort),
            Err(FieldError::FieldAbsent(FieldPath::TcpSrcPort))
        );
        assert!(rec.layout.contains_key(&FieldPath::SrcMac));
        assert!(!rec.layout.contains_key(&FieldPath::Ipv4SrcIp));
        assert!(set_field(&rec, FieldPath::Ipv4SrcIp, &FieldValue::number(0)).is_err());

        let udp_frame = {
            let seg = udp(53, 53, b"x");
            let ip = ipv4(0, 0, 0, 64, 17, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
            eth([0; 6], [0; 6], 0x0800, &ip)
        };
        let rec = PacketRecord::from_ethernet(0, 0, udp_frame);
        assert!(rec.has_field(FieldPath::UdpSrcPort));
        assert!(!rec.has_field(FieldPath::TcpSrcPort));
    }

    #[test]
    fn ts_sec_reads_from_record_header() {
        let rec = PacketRecord::from_ethernet(952_425_600, 123, vec![]);
        let v = get_field(&rec, FieldPath::TsSec).unwrap();
        assert_eq!(v, FieldValue::Timestamp(Timestamp::new(952_425_600, 0)));
        let v = get_field(&rec, FieldPath::TsUsec).unwrap();
        assert_eq!(v, FieldValue::Timestamp(Timestamp::new(0, 123)));
    }

    #[test]
    fn set_then_get_roundtrips() {
        let frame = tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 4321, 8080);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        let rec = set_field(&rec, FieldPath::TcpDstPort, &FieldValue::number(0)).unwrap();
        assert_eq!(
            get_field(&rec, FieldPath::TcpDstPort).unwrap(),
            FieldValue::number(0)
        );
    }

    #[test]
    fn ttl_write_changes_exactly_one_byte() {
        let seg = tcp(20, 515, 0, 0, 0x02, 512, &[], &[]);
        let ip = ipv4(0, 9, 0, 255, 6, [1, 2, 3, 4], [5, 6, 7, 8], &[], &seg);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let rec = PacketRecord::from_ethernet(0, 0, frame.clone());
        let ttl = FieldValue::Bits(Bits::from_slice(&[64u8]));
        let out = set_field(&rec, FieldPath::Ipv4Ttl, &ttl).unwrap();
        let diffs: Vec<usize> = frame
            .iter()
            .zip(out.frame.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(diffs, vec![14 + 8]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let frame = tcp_frame([1, 1, 1, 1], [2, 2, 2, 2], 80, 80);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        let wrong = FieldValue::Bits(Bits::from_slice(&[0u8; 4]));
        assert!(matches!(
            set_field(&rec, FieldPath::TcpDstPort, &wrong),
            Err(FieldError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn ip_options_shift_transport_offsets() {
        let opts = [1u8, 1, 1, 1]; // four NOPs
        let seg = tcp(1000, 2000, 5, 6, 0x10, 100, &[], &[]);
        let ip = ipv4(0, 3, 0, 64, 6, [1, 1, 1, 1], [2, 2, 2, 2], &opts, &seg);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        let span = rec.layout[&FieldPath::TcpSrcPort];
        assert_eq!(span.bit_offset, (14 + 24) * 8);
    }

    #[test]
    fn tcp_options_span_tracks_data_offset() {
        let topts = [2u8, 4, 5, 0xb4]; // MSS option
        let seg = tcp(1, 2, 0, 0, 0x02, 0, &topts, b"data");
        let ip = ipv4(0, 0, 0, 64, 6, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        let span = rec.layout[&FieldPath::TcpOptions];
        assert_eq!(span.bit_offset, (14 + 20 + 20) * 8);
        assert_eq!(span.bit_width, 32);
    }

    #[test]
    fn vlan_tag_shifts_ip_start() {
        let seg = udp(68, 67, &[]);
        let ip = ipv4(0, 0, 0, 64, 17, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
        let mut inner = vec![0x00, 0x64]; // VLAN 100
        inner.extend_from_slice(&0x0800u16.to_be_bytes());
        inner.extend_from_slice(&ip);
        let frame = eth([0; 6], [0; 6], 0x8100, &inner);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        assert_eq!(rec.transport(), Some(Transport::Udp));
        assert_eq!(
            rec.layout[&FieldPath::Ipv4SrcIp].bit_offset,
            (18 + 12) * 8
        );
    }

    #[test]
    fn icmp_error_embeds_inner_header_fields() {
        let inner_seg = tcp(80, 1024, 0, 0, 0x04, 0, &[], &[]);
        let inner = ipv4(0, 42, 0, 60, 6, [9, 9, 9, 9], [8, 8, 8, 8], &[], &inner_seg[..8]);
        let icmp = icmp_unreachable(&inner);
        let ip = ipv4(0, 7, 0, 64, 1, [1, 1, 1, 1], [2, 2, 2, 2], &[], &icmp);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        assert!(rec.layout.contains_key(&FieldPath::IcmpIpv4SrcIp));
        assert!(rec.layout.contains_key(&FieldPath::IcmpOrigData));
        let orig = rec.layout[&FieldPath::IcmpOrigData];
        // 8 bytes of the original TCP header follow the embedded IP header.
        assert_eq!(orig.bit_width, 64);
        assert_eq!(
            get_field(&rec, FieldPath::IcmpIpv4Id).unwrap(),
            FieldValue::Bits(Bits::from_slice(&[0, 42]))
        );
    }

    #[test]
    fn filter_keeps_only_requested_transports() {
        let tcp1 = tcp_frame([1, 1, 1, 1], [2, 2, 2, 2], 80, 81);
        let arp = eth([0; 6], [1; 6], 0x0806, &[0u8; 28]);
        let tcp2 = tcp_frame([3, 3, 3, 3], [4, 4, 4, 4], 82, 83);
        let trace =
            Trace::from_ethernet_frames([(0, 0, tcp1), (1, 0, arp), (2, 0, tcp2)]);

        let kept = filter_protocols(
            &trace,
            &[Transport::Tcp, Transport::Udp, Transport::Icmp],
        );
        assert_eq!(kept.packets.len(), 2);
        assert_eq!(kept.packets[0].ts_sec, 0);
        assert_eq!(kept.packets[1].ts_sec, 2);

        let icmp_only = {
            let icmp = icmp_echo(1, 1, b"ping");
            let ip = ipv4(0, 0, 0, 64, 1, [1, 1, 1, 1], [2, 2, 2, 2], &[], &icmp);
            eth([0; 6], [0; 6], 0x0800, &ip)
        };
        let trace = Trace::from_ethernet_frames([(0, 0, icmp_only)]);
        let kept = filter_protocols(&trace, &[Transport::Tcp, Transport::Udp]);
        assert!(kept.packets.is_empty());

        let all_tcp = Trace::from_ethernet_frames([(
            0,
            0,
            tcp_frame([1, 1, 1, 1], [2, 2, 2, 2], 80, 81),
        )]);
        let kept = filter_protocols(&all_tcp, &[Transport::Tcp]);
        assert_eq!(kept.packets.len(), 1);
        assert_eq!(write_pcap(&kept), write_pcap(&all_tcp));
    }

    #[test]
    fn roundtrip_100_packet_fixture() {
        let mut records = Vec::new();
        for i in 0..100u32 {
            let frame = match i % 4 {
                0 => tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1000 + i as u16, 80),
                1 => {
                    let seg = udp(53, 1000 + i as u16, b"query");
                    let ip = ipv4(0, i as u16, 0, 64, 17, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
                    eth([0; 6], [0; 6], 0x0800, &ip)
                }
                2 => {
                    let icmp = icmp_echo(7, i as u16, b"ping");
                    let ip = ipv4(0, i as u16, 0, 64, 1, [3, 3, 3, 3], [4, 4, 4, 4], &[], &icmp);
                    eth([0; 6], [0; 6], 0x0800, &ip)
                }
                _ => eth([0; 6], [1; 6], 0x0806, &[0u8; 28]),
            };
            records.push((i, i * 7, frame));
        }
        for bytes in [pcap_file_be(&records), pcap_file_le(&records)] {
            let trace = parse_pcap(&bytes).unwrap();
            assert_eq!(trace.packets.len(), 100);
            assert_eq!(write_pcap(&trace), bytes);
        }
    }

    #[test]
    fn whole_file_diff_is_local_to_the_written_field() {
        let frame = tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 4321, 8080);
        let bytes = pcap_file_le(&[(100, 0, frame)]);
        let trace = parse_pcap(&bytes).unwrap();
        let mut modified = trace.clone();
        modified.packets[0] = set_field(
            &modified.packets[0],
            FieldPath::TcpDstPort,
            &FieldValue::number(0),
        )
        .unwrap();
        let out = write_pcap(&modified);
        assert_eq!(out.len(), bytes.len());
        let diffs: Vec<usize> = bytes
            .iter()
            .zip(out.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        // 24 global + 16 record header + byte 36 within the frame.
        assert_eq!(diffs, vec![24 + 16 + 36, 24 + 16 + 37]);
    }

    #[test]
    fn fragment_payload_gets_no_transport_fields() {
        let seg = tcp(1, 2, 0, 0, 0, 0, &[], &[]);
        let ip = ipv4(0, 0, 0x00b9, 64, 6, [1, 1, 1, 1], [2, 2, 2, 2], &[], &seg);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let rec = PacketRecord::from_ethernet(0, 0, frame);
        assert!(!rec.layout.contains_key(&FieldPath::TcpSrcPort));
        assert_eq!(rec.transport(), Some(Transport::Tcp));
    }

    #[test]
    fn checksum_repair_matches_reference_sums() {
        let seg = tcp(20, 515, 1, 2, 0x18, 1024, &[], b"hello");
        let ip = ipv4(0, 7, 0x4000, 64, 6, [10, 0, 0, 1], [10, 0, 0, 2], &[], &seg);
        let frame = eth([0; 6], [0; 6], 0x0800, &ip);
        let mut trace = Trace::from_ethernet_frames([(0, 0, frame)]);
        trace.recompute_checksums();
        let f = &trace.packets[0].frame;

        // Reference IPv4 header checksum: sum all header words must be 0xffff.
        let mut sum = 0u32;
        for i in (14..34).step_by(2) {
            sum += u16::from_be_bytes([f[i], f[i + 1]]) as u32;
        }
        let folded = (sum & 0xffff) + (sum >> 16);
        assert_eq!((folded & 0xffff) + (folded >> 16), 0xffff);
    }

    #[test]
    fn layout_agrees_with_independent_walker_on_randomized_packets() {
        // Deterministic xorshift so the corpus is stable.
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..1000 {
            let r = next();
            let with_vlan = r & 1 == 1;
            let opt_words = ((r >> 1) % 3) as usize;
            let proto_pick = (r >> 3) % 3;
            let sport = (next() % 65536) as u16;
            let dport = (next() % 65536) as u16;
            let options = vec![1u8; opt_words * 4];
            let (proto, seg) = match proto_pick {
                0 => (6u8, tcp(sport, dport, 1, 2, 0x10, 64, &[], b"p")),
                1 => (17u8, udp(sport, dport, b"p")),
                _ => (1u8, icmp_echo(sport, dport, b"p")),
            };
            let ip = ipv4(0, 1, 0, 64, proto, [1, 2, 3, 4], [5, 6, 7, 8], &options, &seg);
            let frame = if with_vlan {
                let mut inner = vec![0x00, 0x01, 0x08, 0x00];
                inner.extend_from_slice(&ip);
                eth([0; 6], [0; 6], 0x8100, &inner)
            } else {
                eth([0; 6], [0; 6], 0x0800, &ip)
            };
            let rec = PacketRecord::from_ethernet(0, 0, frame);

            // Independent arithmetic: fixed header sizes, no bit machinery.
            let ip_start = if with_vlan { 18 } else { 14 };
            let t = ip_start + 20 + opt_words * 4;
            let (sp, dp) = match proto_pick {
                0 => (FieldPath::TcpSrcPort, FieldPath::TcpDstPort),
                1 => (FieldPath::UdpSrcPort, FieldPath::UdpDstPort),
                _ => (FieldPath::IcmpIdentifier, FieldPath::IcmpSequence),
            };
            let (sp_off, dp_off) = match proto_pick {
                2 => (t + 4, t + 6),
                _ => (t, t + 2),
            };
            assert_eq!(rec.layout[&sp].bit_offset, sp_off * 8, "src span");
            assert_eq!(rec.layout[&dp].bit_offset, dp_off * 8, "dst span");
            assert_eq!(
                get_field(&rec, sp).unwrap(),
                match sp.data_type() {
                    DataType::Numeric => FieldValue::number(sport as u64),
                    _ => FieldValue::Bits(Bits::from_slice(&sport.to_be_bytes())),
                }
            );
            assert_eq!(
                rec.layout[&FieldPath::Ipv4SrcIp].bit_offset,
                (ip_start + 12) * 8
            );
        }
    }
}
