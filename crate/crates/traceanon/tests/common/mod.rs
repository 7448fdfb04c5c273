//! Shared test fixtures: an independent pcap/frame writer that assembles
//! bytes by hand, deliberately separate from the library's serializer so
//! roundtrip and layout tests have a reference to check against.

#![allow(dead_code)]

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Big,
    Little,
}

pub struct TcpSpec {
    pub src_ip: [u8; 4],
    pub dst_ip: [u8; 4],
    pub sport: u16,
    pub dport: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub ip_id: u16,
    pub ttl: u8,
    pub ip_options: Vec<u8>,
    pub tcp_options: Vec<u8>,
    pub payload: Vec<u8>,
}

impl Default for TcpSpec {
    fn default() -> Self {
        TcpSpec {
            src_ip: [10, 0, 0, 1],
            dst_ip: [10, 0, 0, 2],
            sport: 40000,
            dport: 80,
            seq: 1,
            ack: 0,
            flags: 0x18,
            window: 8192,
            ip_id: 1,
            ttl: 64,
            ip_options: Vec::new(),
            tcp_options: Vec::new(),
            payload: Vec::new(),
        }
    }
}

pub fn ethernet(dst: [u8; 6], src: [u8; 6], ethertype: u16, payload: &[u8]) -> Vec<u8> {
    let mut f = Vec::with_capacity(14 + payload.len());
    f.extend_from_slice(&dst);
    f.extend_from_slice(&src);
    f.extend_from_slice(&ethertype.to_be_bytes());
    f.extend_from_slice(payload);
    f
}

pub fn ipv4(
    id: u16,
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
    let mut p = Vec::with_capacity(total);
    p.push(0x40 | ihl as u8);
    p.push(0);
    p.extend_from_slice(&(total as u16).to_be_bytes());
    p.extend_from_slice(&id.to_be_bytes());
    p.extend_from_slice(&0u16.to_be_bytes());
    p.push(ttl);
    p.push(proto);
    p.extend_from_slice(&[0xab, 0xcd]); // placeholder checksum
    p.extend_from_slice(&src);
    p.extend_from_slice(&dst);
    p.extend_from_slice(options);
    p.extend_from_slice(payload);
    p
}

pub fn tcp_frame(spec: &TcpSpec) -> Vec<u8> {
    assert_eq!(spec.tcp_options.len() % 4, 0);
    let data_offset = 5 + spec.tcp_options.len() / 4;
    let mut seg = Vec::new();
    seg.extend_from_slice(&spec.sport.to_be_bytes());
    seg.extend_from_slice(&spec.dport.to_be_bytes());
    seg.extend_from_slice(&spec.seq.to_be_bytes());
    seg.extend_from_slice(&spec.ack.to_be_bytes());
    seg.push((data_offset as u8) << 4);
    seg.push(spec.flags);
    seg.extend_from_slice(&spec.window.to_be_bytes());
    seg.extend_from_slice(&[0x11, 0x22]); // placeholder checksum
    seg.extend_from_slice(&[0, 0]);
    seg.extend_from_slice(&spec.tcp_options);
    seg.extend_from_slice(&spec.payload);
    let ip = ipv4(
        spec.ip_id,
        spec.ttl,
        6,
        spec.src_ip,
        spec.dst_ip,
        &spec.ip_options,
        &seg,
    );
    ethernet([2, 2, 2, 2, 2, 2], [1, 1, 1, 1, 1, 1], 0x0800, &ip)
}

pub fn udp_frame(src_ip: [u8; 4], dst_ip: [u8; 4], sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut seg = Vec::new();
    seg.extend_from_slice(&sport.to_be_bytes());
    seg.extend_from_slice(&dport.to_be_bytes());
    seg.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    seg.extend_from_slice(&[0x33, 0x44]);
    seg.extend_from_slice(payload);
    let ip = ipv4(9, 64, 17, src_ip, dst_ip, &[], &seg);
    ethernet([2, 2, 2, 2, 2, 2], [1, 1, 1, 1, 1, 1], 0x0800, &ip)
}

pub fn icmp_echo_frame(src_ip: [u8; 4], dst_ip: [u8; 4], id: u16, seq: u16) -> Vec<u8> {
    let mut icmp = vec![8, 0, 0x55, 0x66];
    icmp.extend_from_slice(&id.to_be_bytes());
    icmp.extend_from_slice(&seq.to_be_bytes());
    icmp.extend_from_slice(b"ping-data");
    let ip = ipv4(11, 64, 1, src_ip, dst_ip, &[], &icmp);
    ethernet([2, 2, 2, 2, 2, 2], [1, 1, 1, 1, 1, 1], 0x0800, &ip)
}

pub fn arp_frame() -> Vec<u8> {
    ethernet([0xff; 6], [1, 1, 1, 1, 1, 1], 0x0806, &[0u8; 28])
}

/// Writes a classic pcap file around raw records, by hand.
pub fn pcap_file(endian: Endian, records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
    fn w16(out: &mut Vec<u8>, v: u16, e: Endian) {
        match e {
            Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
            Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    fn w32(out: &mut Vec<u8>, v: u32, e: Endian) {
        match e {
            Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
            Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    let mut out = Vec::new();
    match endian {
        Endian::Big => out.extend_from_slice(&[0xa1, 0xb2, 0xc3, 0xd4]),
        Endian::Little => out.extend_from_slice(&[0xd4, 0xc3, 0xb2, 0xa1]),
    }
    w16(&mut out, 2, endian);
    w16(&mut out, 4, endian);
    w32(&mut out, 0, endian);
    w32(&mut out, 0, endian);
    w32(&mut out, 65535, endian);
    w32(&mut out, 1, endian);
    for (sec, usec, frame) in records {
        w32(&mut out, *sec, endian);
        w32(&mut out, *usec, endian);
        w32(&mut out, frame.len() as u32, endian);
        w32(&mut out, frame.len() as u32, endian);
        out.extend_from_slice(frame);
    }
    out
}

/// Small deterministic generator so fixtures are stable across runs.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}
