//! Alert generation: ingesting external Snort CSV alert logs, plus a
//! miniature stateless signature engine that makes the whole pipeline
//! self-contained at desk scale.
//!
//! The CSV layout is the 27-column Snort alert schema, one alert per line,
//! empty string meaning "absent". The mini engine evaluates per-packet
//! conjunctive rules only; stateful detectors (portscan trackers and
//! friends) are out of scope.

use std::fmt::Write as _;

use chrono::{TimeZone, Utc};
use thiserror::Error;

use crate::pcap::{Trace, Transport};

/// One IDS alert. Every field except `sig_id` is optional.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Alert {
    pub timestamp: Option<String>,
    pub sig_generator: Option<u64>,
    pub sig_id: u64,
    pub sig_rev: Option<u64>,
    pub msg: Option<String>,
    pub proto: Option<String>,
    pub src: Option<String>,
    pub srcport: Option<u16>,
    pub dst: Option<String>,
    pub dstport: Option<u16>,
    pub ethsrc: Option<String>,
    pub ethdst: Option<String>,
    pub ethlen: Option<u32>,
    pub tcpflags: Option<String>,
    pub tcpseq: Option<u32>,
    pub tcpack: Option<u32>,
    pub tcplen: Option<u32>,
    pub tcpwindow: Option<u32>,
    pub ttl: Option<u8>,
    pub tos: Option<u8>,
    pub id: Option<u16>,
    pub dgmlen: Option<u32>,
    pub iplen: Option<u32>,
    pub icmptype: Option<u8>,
    pub icmpcoe: Option<u8>,
    pub icmpid: Option<u16>,
    pub icmpseq: Option<u16>,
}

/// The projectable alert columns, in CSV order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum AlertField {
    Timestamp,
    SigGenerator,
    SigId,
    SigRev,
    Msg,
    Proto,
    Src,
    Srcport,
    Dst,
    Dstport,
    Ethsrc,
    Ethdst,
    Ethlen,
    Tcpflags,
    Tcpseq,
    Tcpack,
    Tcplen,
    Tcpwindow,
    Ttl,
    Tos,
    Id,
    Dgmlen,
    Iplen,
    Icmptype,
    Icmpcoe,
    Icmpid,
    Icmpseq,
}

impl AlertField {
    pub const ALL: &'static [AlertField] = &[
        AlertField::Timestamp,
        AlertField::SigGenerator,
        AlertField::SigId,
        AlertField::SigRev,
        AlertField::Msg,
        AlertField::Proto,
        AlertField::Src,
        AlertField::Srcport,
        AlertField::Dst,
        AlertField::Dstport,
        AlertField::Ethsrc,
        AlertField::Ethdst,
        AlertField::Ethlen,
        AlertField::Tcpflags,
        AlertField::Tcpseq,
        AlertField::Tcpack,
        AlertField::Tcplen,
        AlertField::Tcpwindow,
        AlertField::Ttl,
        AlertField::Tos,
        AlertField::Id,
        AlertField::Dgmlen,
        AlertField::Iplen,
        AlertField::Icmptype,
        AlertField::Icmpcoe,
        AlertField::Icmpid,
        AlertField::Icmpseq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlertField::Timestamp => "timestamp",
            AlertField::SigGenerator => "sig_generator",
            AlertField::SigId => "sig_id",
            AlertField::SigRev => "sig_rev",
            AlertField::Msg => "msg",
            AlertField::Proto => "proto",
            AlertField::Src => "src",
            AlertField::Srcport => "srcport",
            AlertField::Dst => "dst",
            AlertField::Dstport => "dstport",
            AlertField::Ethsrc => "ethsrc",
            AlertField::Ethdst => "ethdst",
            AlertField::Ethlen => "ethlen",
            AlertField::Tcpflags => "tcpflags",
            AlertField::Tcpseq => "tcpseq",
            AlertField::Tcpack => "tcpack",
            AlertField::Tcplen => "tcplen",
            AlertField::Tcpwindow => "tcpwindow",
            AlertField::Ttl => "ttl",
            AlertField::Tos => "tos",
            AlertField::Id => "id",
            AlertField::Dgmlen => "dgmlen",
            AlertField::Iplen => "iplen",
            AlertField::Icmptype => "icmptype",
            AlertField::Icmpcoe => "icmpcoe",
            AlertField::Icmpid => "icmpid",
            AlertField::Icmpseq => "icmpseq",
        }
    }

    pub fn parse(s: &str) -> Option<AlertField> {
        AlertField::ALL.iter().copied().find(|f| f.name() == s)
    }
}

impl Alert {
    /// Canonical text of one column, `None` when absent.
    pub fn field_text(&self, field: AlertField) -> Option<String> {
        fn num<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        match field {
            AlertField::Timestamp => self.timestamp.clone(),
            AlertField::SigGenerator => num(&self.sig_generator),
            AlertField::SigId => Some(self.sig_id.to_string()),
            AlertField::SigRev => num(&self.sig_rev),
            AlertField::Msg => self.msg.clone(),
            AlertField::Proto => self.proto.clone(),
            AlertField::Src => self.src.clone(),
            AlertField::Srcport => num(&self.srcport),
            AlertField::Dst => self.dst.clone(),
            AlertField::Dstport => num(&self.dstport),
            AlertField::Ethsrc => self.ethsrc.clone(),
            AlertField::Ethdst => self.ethdst.clone(),
            AlertField::Ethlen => num(&self.ethlen),
            AlertField::Tcpflags => self.tcpflags.clone(),
            AlertField::Tcpseq => num(&self.tcpseq),
            AlertField::Tcpack => num(&self.tcpack),
            AlertField::Tcplen => num(&self.tcplen),
            AlertField::Tcpwindow => num(&self.tcpwindow),
            AlertField::Ttl => num(&self.ttl),
            AlertField::Tos => num(&self.tos),
            AlertField::Id => num(&self.id),
            AlertField::Dgmlen => num(&self.dgmlen),
            AlertField::Iplen => num(&self.iplen),
            AlertField::Icmptype => num(&self.icmptype),
            AlertField::Icmpcoe => num(&self.icmpcoe),
            AlertField::Icmpid => num(&self.icmpid),
            AlertField::Icmpseq => num(&self.icmpseq),
        }
    }
}

/// A multiset of alerts: duplicates count.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlertSet {
    pub alerts: Vec<Alert>,
}

impl AlertSet {
    pub fn new(alerts: Vec<Alert>) -> AlertSet {
        AlertSet { alerts }
    }

    pub fn len(&self) -> usize {
        self.alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Alert> {
        self.alerts.iter()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlertCsvError {
    #[error("line {line}: expected 27 columns, got {got}")]
    BadColumnCount { line: usize, got: usize },
    #[error("line {line}, column {column}: bad {what}: {reason}")]
    BadFieldFormat {
        line: usize,
        column: usize,
        what: &'static str,
        reason: String,
    },
}

fn opt_num<T: std::str::FromStr>(
    raw: &str,
    line: usize,
    column: usize,
    what: &'static str,
) -> Result<Option<T>, AlertCsvError>
where
    T::Err: std::fmt::Display,
{
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<T>()
        .map(Some)
        .map_err(|e| AlertCsvError::BadFieldFormat {
            line,
            column,
            what,
            reason: e.to_string(),
        })
}

fn opt_str(raw: &str) -> Option<String> {
    if raw.is_empty() {
        None
    } else {
        Some(raw.to_string())
    }
}

/// Parses the 27-column Snort alert CSV. Raw multiplicity is preserved.
pub fn parse_snort_csv(text: &str) -> Result<AlertSet, AlertCsvError> {
    let mut alerts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 27 {
            return Err(AlertCsvError::BadColumnCount {
                line,
                got: cols.len(),
            });
        }
        let alert = Alert {
            timestamp: opt_str(cols[0]),
            sig_generator: opt_num(cols[1], line, 2, "sig_generator")?,
            sig_id: opt_num::<u64>(cols[2], line, 3, "sig_id")?.ok_or(
                AlertCsvError::BadFieldFormat {
                    line,
                    column: 3,
                    what: "sig_id",
                    reason: "sig_id is required".to_string(),
                },
            )?,
            sig_rev: opt_num(cols[3], line, 4, "sig_rev")?,
            msg: opt_str(cols[4]),
            proto: opt_str(cols[5]),
            src: opt_str(cols[6]),
            srcport: opt_num(cols[7], line, 8, "srcport")?,
            dst: opt_str(cols[8]),
            dstport: opt_num(cols[9], line, 10, "dstport")?,
            ethsrc: opt_str(cols[10]),
            ethdst: opt_str(cols[11]),
            ethlen: opt_num(cols[12], line, 13, "ethlen")?,
            tcpflags: opt_str(cols[13]),
            tcpseq: opt_num(cols[14], line, 15, "tcpseq")?,
            tcpack: opt_num(cols[15], line, 16, "tcpack")?,
            tcplen: opt_num(cols[16], line, 17, "tcplen")?,
            tcpwindow: opt_num(cols[17], line, 18, "tcpwindow")?,
            ttl: opt_num(cols[18], line, 19, "ttl")?,
            tos: opt_num(cols[19], line, 20, "tos")?,
            id: opt_num(cols[20], line, 21, "id")?,
            dgmlen: opt_num(cols[21], line, 22, "dgmlen")?,
            iplen: opt_num(cols[22], line, 23, "iplen")?,
            icmptype: opt_num(cols[23], line, 24, "icmptype")?,
            icmpcoe: opt_num(cols[24], line, 25, "icmpcoe")?,
            icmpid: opt_num(cols[25], line, 26, "icmpid")?,
            icmpseq: opt_num(cols[26], line, 27, "icmpseq")?,
        };
        alerts.push(alert);
    }
    Ok(AlertSet::new(alerts))
}

/// Serializes alerts back to the same 27-column CSV.
pub fn write_snort_csv(set: &AlertSet) -> String {
    let mut out = String::new();
    for alert in &set.alerts {
        let mut cols: Vec<String> = Vec::with_capacity(27);
        for field in AlertField::ALL {
            cols.push(alert.field_text(*field).unwrap_or_default());
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

/// One conjunctive predicate over packet headers or payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    SrcPortEq(u16),
    DstPortEq(u16),
    /// Matches when either port equals the value, the usual shape of
    /// "traffic to or from port N" signatures.
    AnyPortEq(u16),
    SrcPortLt(u16),
    DstPortLt(u16),
    SrcPortRange(u16, u16),
    DstPortRange(u16, u16),
    /// All flag bits in the mask are set.
    FlagsSet(u8),
    SrcNet { addr: u32, prefix_len: u8 },
    DstNet { addr: u32, prefix_len: u8 },
    PayloadContains(Vec<u8>),
}

/// One signature: transport protocol gate plus a predicate conjunction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub sid: u64,
    pub msg: String,
    pub proto: Transport,
    pub predicates: Vec<Predicate>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate sid {sid}")]
    DuplicateSid { line: usize, sid: u64 },
    #[error("line {line}: rule {sid} has no predicates")]
    NoPredicates { line: usize, sid: u64 },
}

/// A small demonstration rule set exercising header and payload matching.
pub const DEMO_RULES: &str = "\
# demo signatures
rule sid=524 msg=\"BAD-TRAFFIC tcp port 0 traffic\" proto=TCP port==0
rule sid=503 msg=\"MISC source port 20 to <1024\" proto=TCP srcport==20, dstport<1024
rule sid=1292 msg=\"ATTACK-RESPONSES directory listing\" proto=TCP payload~\"Volume Serial Number\"
";

pub fn demo_rules() -> RuleSet {
    parse_rules(DEMO_RULES).expect("embedded demo rules parse")
}

/// Parses the line-oriented rule grammar:
///
/// ```text
/// rule sid=<int> msg="<text>" proto=<TCP|UDP|ICMP> <pred>(, <pred>)*
/// ```
///
/// Predicates: `srcport==N`, `dstport==N`, `port==N`, `srcport<N`,
/// `dstport<N`, `srcport=N:M`, `dstport=N:M`, `flags&FSRPAUEC`,
/// `src=A.B.C.D/L`, `dst=A.B.C.D/L`, `payload~"text"`.
pub fn parse_rules(text: &str) -> Result<RuleSet, RuleParseError> {
    let mut rules: Vec<Rule> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let syntax = |message: String| RuleParseError::Syntax { line, message };
        let rest = content
            .strip_prefix("rule ")
            .ok_or_else(|| syntax("rules start with `rule `".to_string()))?;

        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix("sid=")
            .ok_or_else(|| syntax("expected `sid=<int>`".to_string()))?;
        let (sid_str, rest) = rest
            .split_once(' ')
            .ok_or_else(|| syntax("expected ` msg=` after sid".to_string()))?;
        let sid: u64 = sid_str
            .parse()
            .map_err(|e| syntax(format!("bad sid `{sid_str}`: {e}")))?;

        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix("msg=\"")
            .ok_or_else(|| syntax("expected `msg=\"<text>\"`".to_string()))?;
        let (msg, rest) = rest
            .split_once('"')
            .ok_or_else(|| syntax("unterminated msg string".to_string()))?;

        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix("proto=")
            .ok_or_else(|| syntax("expected `proto=<TCP|UDP|ICMP>`".to_string()))?;
        let (proto_str, preds_str) = match rest.split_once(' ') {
            Some((p, r)) => (p, r),
            None => (rest, ""),
        };
        let proto = match proto_str {
            "TCP" => Transport::Tcp,
            "UDP" => Transport::Udp,
            "ICMP" => Transport::Icmp,
            other => return Err(syntax(format!("unknown protocol `{other}`"))),
        };

        let mut predicates = Vec::new();
        for part in split_predicates(preds_str) {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            predicates.push(parse_predicate(part).map_err(syntax)?);
        }
        if predicates.is_empty() {
            return Err(RuleParseError::NoPredicates { line, sid });
        }
        if rules.iter().any(|r| r.sid == sid) {
            return Err(RuleParseError::DuplicateSid { line, sid });
        }
        rules.push(Rule {
            sid,
            msg: msg.to_string(),
            proto,
            predicates,
        });
    }
    Ok(RuleSet { rules })
}

/// Splits on commas that sit outside quoted payload strings.
fn split_predicates(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_quotes = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_predicate(s: &str) -> Result<Predicate, String> {
    fn port(v: &str) -> Result<u16, String> {
        v.parse().map_err(|e| format!("bad port `{v}`: {e}"))
    }
    if let Some(v) = s.strip_prefix("port==") {
        return Ok(Predicate::AnyPortEq(port(v)?));
    }
    if let Some(v) = s.strip_prefix("srcport==") {
        return Ok(Predicate::SrcPortEq(port(v)?));
    }
    if let Some(v) = s.strip_prefix("dstport==") {
        return Ok(Predicate::DstPortEq(port(v)?));
    }
    if let Some(v) = s.strip_prefix("srcport<") {
        return Ok(Predicate::SrcPortLt(port(v)?));
    }
    if let Some(v) = s.strip_prefix("dstport<") {
        return Ok(Predicate::DstPortLt(port(v)?));
    }
    if let Some(v) = s.strip_prefix("srcport=") {
        let (lo, hi) = v.split_once(':').ok_or("srcport= takes a lo:hi range")?;
        return Ok(Predicate::SrcPortRange(port(lo)?, port(hi)?));
    }
    if let Some(v) = s.strip_prefix("dstport=") {
        let (lo, hi) = v.split_once(':').ok_or("dstport= takes a lo:hi range")?;
        return Ok(Predicate::DstPortRange(port(lo)?, port(hi)?));
    }
    if let Some(v) = s.strip_prefix("flags&") {
        let mut mask = 0u8;
        for c in v.chars() {
            mask |= match c {
                'F' => 0x01,
                'S' => 0x02,
                'R' => 0x04,
                'P' => 0x08,
                'A' => 0x10,
                'U' => 0x20,
                'E' => 0x40,
                'C' => 0x80,
                _ => return Err(format!("unknown flag letter `{c}`")),
            };
        }
        return Ok(Predicate::FlagsSet(mask));
    }
    if let Some(v) = s.strip_prefix("src=") {
        let (addr, len) = parse_net(v)?;
        return Ok(Predicate::SrcNet {
            addr,
            prefix_len: len,
        });
    }
    if let Some(v) = s.strip_prefix("dst=") {
        let (addr, len) = parse_net(v)?;
        return Ok(Predicate::DstNet {
            addr,
            prefix_len: len,
        });
    }
    if let Some(v) = s.strip_prefix("payload~") {
        let quoted = v
            .strip_prefix('"')
            .and_then(|x| x.strip_suffix('"'))
            .ok_or("payload~ takes a quoted string")?;
        return Ok(Predicate::PayloadContains(quoted.as_bytes().to_vec()));
    }
    Err(format!("unrecognized predicate `{s}`"))
}

fn parse_net(v: &str) -> Result<(u32, u8), String> {
    let (addr_str, len) = match v.split_once('/') {
        Some((a, l)) => (
            a,
            l.parse::<u8>().map_err(|e| format!("bad prefix `{l}`: {e}"))?,
        ),
        None => (v, 32),
    };
    if len > 32 {
        return Err(format!("prefix length {len} out of range"));
    }
    let ip: std::net::Ipv4Addr = addr_str
        .parse()
        .map_err(|e| format!("bad address `{addr_str}`: {e}"))?;
    Ok((u32::from(ip), len))
}

fn net_contains(addr: u32, net: u32, prefix_len: u8) -> bool {
    if prefix_len == 0 {
        return true;
    }
    let shift = 32 - prefix_len as u32;
    (addr >> shift) == (net >> shift)
}

/// Header values the engine needs from one packet, decoded straight from
/// the frame bytes.
struct PacketView<'a> {
    transport: Transport,
    src_ip: u32,
    dst_ip: u32,
    src_port: Option<u16>,
    dst_port: Option<u16>,
    tcp_flags: Option<u8>,
    payload: &'a [u8],
    ip_start: usize,
    transport_start: usize,
}

fn be16(f: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([f[off], f[off + 1]])
}

fn be32(f: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([f[off], f[off + 1], f[off + 2], f[off + 3]])
}

fn view_packet(packet: &crate::pcap::PacketRecord) -> Option<PacketView<'_>> {
    let anatomy = packet.anatomy?;
    let transport = anatomy.transport?;
    let t = anatomy.transport_start?;
    let f = &packet.frame;
    let ip = anatomy.ip_start;
    if f.len() < ip + 20 {
        return None;
    }
    let (src_port, dst_port, tcp_flags) = match transport {
        Transport::Tcp | Transport::Udp => {
            if f.len() < t + 4 {
                (None, None, None)
            } else {
                let flags = (transport == Transport::Tcp && f.len() >= t + 14)
                    .then(|| f[t + 13]);
                (Some(be16(f, t)), Some(be16(f, t + 2)), flags)
            }
        }
        Transport::Icmp => (None, None, None),
    };
    let payload = anatomy
        .payload_start
        .filter(|p| *p <= f.len())
        .map(|p| &f[p..])
        .unwrap_or(&[]);
    Some(PacketView {
        transport,
        src_ip: be32(f, ip + 12),
        dst_ip: be32(f, ip + 16),
        src_port,
        dst_port,
        tcp_flags,
        payload,
        ip_start: ip,
        transport_start: t,
    })
}

fn predicate_holds(pred: &Predicate, view: &PacketView<'_>) -> bool {
    match pred {
        Predicate::SrcPortEq(p) => view.src_port == Some(*p),
        Predicate::DstPortEq(p) => view.dst_port == Some(*p),
        Predicate::AnyPortEq(p) => view.src_port == Some(*p) || view.dst_port == Some(*p),
        Predicate::SrcPortLt(p) => view.src_port.is_some_and(|v| v < *p),
        Predicate::DstPortLt(p) => view.dst_port.is_some_and(|v| v < *p),
        Predicate::SrcPortRange(lo, hi) => view.src_port.is_some_and(|v| v >= *lo && v <= *hi),
        Predicate::DstPortRange(lo, hi) => view.dst_port.is_some_and(|v| v >= *lo && v <= *hi),
        Predicate::FlagsSet(mask) => view.tcp_flags.is_some_and(|f| f & mask == *mask),
        Predicate::SrcNet { addr, prefix_len } => net_contains(view.src_ip, *addr, *prefix_len),
        Predicate::DstNet { addr, prefix_len } => net_contains(view.dst_ip, *addr, *prefix_len),
        Predicate::PayloadContains(needle) => {
            !needle.is_empty()
                && view
                    .payload
                    .windows(needle.len())
                    .any(|w| w == needle.as_slice())
        }
    }
}

fn format_mac(f: &[u8], off: usize) -> String {
    f[off..off + 6]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}

fn format_ip(addr: u32) -> String {
    std::net::Ipv4Addr::from(addr).to_string()
}

/// Snort-style flag rendering: one letter per set bit, `*` otherwise.
fn format_flags(flags: u8) -> String {
    const LETTERS: [(u8, char); 8] = [
        (0x80, 'C'),
        (0x40, 'E'),
        (0x20, 'U'),
        (0x10, 'A'),
        (0x08, 'P'),
        (0x04, 'R'),
        (0x02, 'S'),
        (0x01, 'F'),
    ];
    LETTERS
        .iter()
        .map(|(bit, letter)| if flags & bit != 0 { *letter } else { '*' })
        .collect()
}

fn format_timestamp(sec: u32, usec: u32) -> String {
    let dt = Utc
        .timestamp_opt(sec as i64, usec * 1000)
        .single()
        .unwrap_or_else(|| Utc.timestamp_opt(0, 0).single().unwrap());
    format!("{}.{usec:06}", dt.format("%m/%d/%y-%H:%M:%S"))
}

fn alert_for(packet: &crate::pcap::PacketRecord, view: &PacketView<'_>, rule: &Rule) -> Alert {
    let f = &packet.frame;
    let ip = view.ip_start;
    let t = view.transport_start;
    let ihl = (f[ip] & 0x0f) as u32 * 4;
    let mut alert = Alert {
        timestamp: Some(format_timestamp(packet.ts_sec, packet.ts_usec)),
        sig_generator: Some(1),
        sig_id: rule.sid,
        sig_rev: Some(1),
        msg: Some(rule.msg.clone()),
        proto: Some(view.transport.name().to_string()),
        src: Some(format_ip(view.src_ip)),
        srcport: view.src_port,
        dst: Some(format_ip(view.dst_ip)),
        dstport: view.dst_port,
        ethsrc: Some(format_mac(f, 6)),
        ethdst: Some(format_mac(f, 0)),
        ethlen: Some(f.len() as u32),
        ttl: Some(f[ip + 8]),
        tos: Some(f[ip + 1]),
        id: Some(be16(f, ip + 4)),
        dgmlen: Some(be16(f, ip + 2) as u32),
        iplen: Some(ihl),
        ..Alert::default()
    };
    match view.transport {
        Transport::Tcp => {
            if f.len() >= t + 20 {
                alert.tcpflags = Some(format_flags(f[t + 13]));
                alert.tcpseq = Some(be32(f, t + 4));
                alert.tcpack = Some(be32(f, t + 8));
                alert.tcplen = Some(((f[t + 12] >> 4) as u32) * 4);
                alert.tcpwindow = Some(be16(f, t + 14) as u32);
            }
        }
        Transport::Udp => {}
        Transport::Icmp => {
            if f.len() >= t + 2 {
                alert.icmptype = Some(f[t]);
                alert.icmpcoe = Some(f[t + 1]);
            }
            if f.len() >= t + 8 && matches!(f[t], 0 | 8 | 13 | 14 | 15 | 16) {
                alert.icmpid = Some(be16(f, t + 4));
                alert.icmpseq = Some(be16(f, t + 6));
            }
        }
    }
    alert
}

/// Runs every rule over every packet; each full predicate match emits one
/// alert populated from that packet's headers. Deterministic: packets in
/// trace order, rules in file order.
pub fn run_mini_ids(trace: &Trace, rules: &RuleSet) -> AlertSet {
    let mut alerts = Vec::new();
    for packet in &trace.packets {
        let Some(view) = view_packet(packet) else {
            continue;
        };
        for rule in &rules.rules {
            if rule.proto != view.transport {
                continue;
            }
            if rule.predicates.iter().all(|p| predicate_holds(p, &view)) {
                alerts.push(alert_for(packet, &view, rule));
            }
        }
    }
    AlertSet::new(alerts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::Trace;

    fn tcp_frame_with_payload(
        src_ip: [u8; 4],
        dst_ip: [u8; 4],
        sport: u16,
        dport: u16,
        flags: u8,
        payload: &[u8],
    ) -> Vec<u8> {
        let mut seg = Vec::new();
        seg.extend_from_slice(&sport.to_be_bytes());
        seg.extend_from_slice(&dport.to_be_bytes());
        seg.extend_from_slice(&100u32.to_be_bytes());
        seg.extend_from_slice(&200u32.to_be_bytes());
        seg.push(0x50);
        seg.push(flags);
        seg.extend_from_slice(&8192u16.to_be_bytes());
        seg.extend_from_slice(&[0, 0, 0, 0]);
        seg.extend_from_slice(payload);
        let total = 20 + seg.len();
        let mut ip = vec![0x45, 0x10];
        ip.extend_from_slice(&(total as u16).to_be_bytes());
        ip.extend_from_slice(&42u16.to_be_bytes());
        ip.extend_from_slice(&0u16.to_be_bytes());
        ip.push(63);
        ip.push(6);
        ip.extend_from_slice(&[0, 0]);
        ip.extend_from_slice(&src_ip);
        ip.extend_from_slice(&dst_ip);
        ip.extend_from_slice(&seg);
        let mut f = vec![0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff, 1, 2, 3, 4, 5, 6, 0x08, 0x00];
        f.extend_from_slice(&ip);
        f
    }

    #[test]
    fn empty_csv_is_an_empty_set() {
        assert!(parse_snort_csv("").unwrap().is_empty());
    }

    #[test]
    fn csv_row_parses_with_absent_fields() {
        // sig_id 524, TCP, dstport 0 — the port-0 signature shape.
        let row = "01/07/99-12:00:00.000001,1,524,1,BAD-TRAFFIC tcp port 0 traffic,TCP,10.0.0.1,3456,10.0.0.2,0,aa:bb:cc:dd:ee:ff,01:02:03:04:05:06,60,***A****,100,200,20,8192,63,16,42,40,20,,,,\n";
        let set = parse_snort_csv(row).unwrap();
        assert_eq!(set.len(), 1);
        let a = &set.alerts[0];
        assert_eq!(a.sig_id, 524);
        assert_eq!(a.dstport, Some(0));
        assert_eq!(a.proto.as_deref(), Some("TCP"));
        assert_eq!(a.icmptype, None);
    }

    #[test]
    fn bad_column_count_names_the_line() {
        let row = "a,b,c\n";
        assert_eq!(
            parse_snort_csv(row),
            Err(AlertCsvError::BadColumnCount { line: 1, got: 3 })
        );
        let row26 = vec![""; 26].join(",");
        assert_eq!(
            parse_snort_csv(&row26),
            Err(AlertCsvError::BadColumnCount { line: 1, got: 26 })
        );
    }

    #[test]
    fn bad_field_format_names_line_and_column() {
        let mut cols = vec![String::new(); 27];
        cols[2] = "524".to_string();
        cols[7] = "notaport".to_string();
        let row = cols.join(",");
        assert!(matches!(
            parse_snort_csv(&row),
            Err(AlertCsvError::BadFieldFormat {
                line: 1,
                column: 8,
                ..
            })
        ));
    }

    #[test]
    fn csv_roundtrips_field_for_field() {
        let trace = Trace::from_ethernet_frames([(
            10,
            20,
            tcp_frame_with_payload([10, 0, 0, 1], [10, 0, 0, 2], 20, 515, 0x18, b"xyz"),
        )]);
        let rules = parse_rules(
            "rule sid=503 msg=\"MISC source port 20 to <1024\" proto=TCP srcport==20, dstport<1024\n",
        )
        .unwrap();
        let alerts = run_mini_ids(&trace, &rules);
        assert_eq!(alerts.len(), 1);
        let csv = write_snort_csv(&alerts);
        let reparsed = parse_snort_csv(&csv).unwrap();
        assert_eq!(reparsed, alerts);
        assert_eq!(write_snort_csv(&reparsed), csv);
    }

    #[test]
    fn port_zero_rule_floods_on_zeroed_trace() {
        let frames: Vec<(u32, u32, Vec<u8>)> = (0..20)
            .map(|i| {
                (
                    i,
                    0,
                    tcp_frame_with_payload(
                        [10, 0, 0, 1],
                        [10, 0, 0, 2],
                        2000 + i as u16,
                        0, // every dst port already zero
                        0x02,
                        b"",
                    ),
                )
            })
            .collect();
        let trace = Trace::from_ethernet_frames(frames);
        let rules = parse_rules(
            "rule sid=524 msg=\"BAD-TRAFFIC tcp port 0 traffic\" proto=TCP port==0\n",
        )
        .unwrap();
        let alerts = run_mini_ids(&trace, &rules);
        assert_eq!(alerts.len(), 20);
        assert!(alerts.iter().all(|a| a.sig_id == 524));
    }

    #[test]
    fn source_port_20_rule_matches_the_published_example() {
        let trace = Trace::from_ethernet_frames([(
            0,
            0,
            tcp_frame_with_payload([1, 1, 1, 1], [2, 2, 2, 2], 20, 515, 0x10, b""),
        )]);
        let rules = parse_rules(
            "rule sid=503 msg=\"MISC source port 20 to <1024\" proto=TCP srcport==20, dstport<1024\n",
        )
        .unwrap();
        let alerts = run_mini_ids(&trace, &rules);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts.alerts[0].sig_id, 503);
        assert_eq!(alerts.alerts[0].srcport, Some(20));
        assert_eq!(alerts.alerts[0].dstport, Some(515));
    }

    #[test]
    fn empty_rule_set_produces_no_alerts() {
        let trace = Trace::from_ethernet_frames([(
            0,
            0,
            tcp_frame_with_payload([1, 1, 1, 1], [2, 2, 2, 2], 1, 2, 0, b""),
        )]);
        let alerts = run_mini_ids(&trace, &RuleSet::default());
        assert!(alerts.is_empty());
    }

    #[test]
    fn payload_and_flag_and_net_predicates() {
        let trace = Trace::from_ethernet_frames([
            (
                0,
                0,
                tcp_frame_with_payload(
                    [10, 1, 2, 3],
                    [192, 168, 0, 1],
                    4000,
                    80,
                    0x12,
                    b"-- Volume Serial Number is 3E2B --",
                ),
            ),
            (
                1,
                0,
                tcp_frame_with_payload([172, 16, 0, 1], [192, 168, 0, 1], 4001, 80, 0x10, b"ok"),
            ),
        ]);
        let rules = parse_rules(
            "rule sid=1292 msg=\"dir listing\" proto=TCP payload~\"Volume Serial Number\"\n\
             rule sid=9001 msg=\"syn-ack from ten-net\" proto=TCP flags&SA, src=10.0.0.0/8\n",
        )
        .unwrap();
        let alerts = run_mini_ids(&trace, &rules);
        let sids: Vec<u64> = alerts.iter().map(|a| a.sig_id).collect();
        assert_eq!(sids, vec![1292, 9001]);
    }

    #[test]
    fn rule_errors_carry_lines() {
        assert!(matches!(
            parse_rules("rule sid=1 msg=\"a\" proto=TCP port==0\nrule sid=1 msg=\"b\" proto=TCP port==1\n"),
            Err(RuleParseError::DuplicateSid { line: 2, sid: 1 })
        ));
        assert!(matches!(
            parse_rules("rule sid=2 msg=\"a\" proto=TCP\n"),
            Err(RuleParseError::NoPredicates { line: 1, sid: 2 })
        ));
        assert!(matches!(
            parse_rules("alert tcp any any\n"),
            Err(RuleParseError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn alert_counts_match_naive_rescan() {
        // Independent oracle: hand-walked byte offsets, no PacketView.
        let frames: Vec<(u32, u32, Vec<u8>)> = (0..50)
            .map(|i| {
                (
                    i,
                    0,
                    tcp_frame_with_payload(
                        [10, 0, 0, (i % 7) as u8],
                        [10, 0, 0, 99],
                        if i % 3 == 0 { 20 } else { 3000 + i as u16 },
                        (i * 37 % 1024) as u16,
                        0x10,
                        b"",
                    ),
                )
            })
            .collect();
        let trace = Trace::from_ethernet_frames(frames.clone());
        let rules = parse_rules(
            "rule sid=503 msg=\"m\" proto=TCP srcport==20, dstport<1024\n",
        )
        .unwrap();
        let engine_count = run_mini_ids(&trace, &rules).len();

        let oracle_count = frames
            .iter()
            .filter(|(_, _, f)| {
                let sport = u16::from_be_bytes([f[34], f[35]]);
                let dport = u16::from_be_bytes([f[36], f[37]]);
                sport == 20 && dport < 1024
            })
            .count();
        assert_eq!(engine_count, oracle_count);
        assert!(oracle_count > 0);
    }

    #[test]
    fn detection_is_invariant_under_reserialization() {
        use crate::pcap::{parse_pcap, write_pcap};
        let trace = Trace::from_ethernet_frames([(
            5,
            6,
            tcp_frame_with_payload([10, 0, 0, 1], [10, 0, 0, 2], 20, 100, 0x18, b"hello"),
        )]);
        let rules = demo_rules();
        let direct = run_mini_ids(&trace, &rules);
        let reparsed = parse_pcap(&write_pcap(&trace)).unwrap();
        let indirect = run_mini_ids(&reparsed, &rules);
        assert_eq!(direct, indirect);
    }
}
