//! The catalog of anonymizable packet fields and their typed values.
//!
//! Every rewritable location in a captured frame (or its pcap record header)
//! is named by a [`FieldPath`]. A path carries a declared [`DataType`] that
//! decides how its bits are interpreted and which anonymization algorithms
//! may touch it, and — for all but the two variable-width paths — a fixed
//! bit width.

use std::fmt;

use bitvec::prelude::*;

/// Raw field content as an ordered bit sequence, most significant bit first.
pub type Bits = BitVec<u8, Msb0>;

/// How a field's bits are interpreted.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum DataType {
    /// An opaque bit string of a known width.
    Binary,
    /// An unsigned integer; digit-level operations use its declared base.
    Numeric,
    /// A point in time with microsecond resolution.
    Timestamp,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Binary => "binary",
            DataType::Numeric => "numeric",
            DataType::Timestamp => "timestamp",
        })
    }
}

macro_rules! field_paths {
    ($( $variant:ident => ($name:literal, $dt:ident, $width:expr) ),+ $(,)?) => {
        /// A named, addressable field of a captured packet.
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub enum FieldPath {
            $($variant),+
        }

        impl FieldPath {
            /// Every path, in canonical catalog order.
            pub const ALL: &'static [FieldPath] = &[$(FieldPath::$variant),+];

            /// The catalog spelling of this path.
            pub fn name(self) -> &'static str {
                match self {
                    $(FieldPath::$variant => $name),+
                }
            }

            /// Looks a path up by its catalog spelling.
            pub fn parse(s: &str) -> Option<FieldPath> {
                match s {
                    $($name => Some(FieldPath::$variant),)+
                    _ => None,
                }
            }

            pub fn data_type(self) -> DataType {
                match self {
                    $(FieldPath::$variant => DataType::$dt),+
                }
            }

            /// Declared bit width, or `None` for the variable-width paths
            /// (`TCP_OPTIONS`, `ICMP_ORIG_DATA`) whose width is per-packet.
            pub fn fixed_width(self) -> Option<usize> {
                match self {
                    $(FieldPath::$variant => $width),+
                }
            }
        }
    };
}

field_paths! {
    SrcMac         => ("SRC_MAC",            Binary,    Some(48)),
    DstMac         => ("DST_MAC",            Binary,    Some(48)),
    TsSec          => ("TS_SEC",             Timestamp, Some(32)),
    TsUsec         => ("TS_USEC",            Timestamp, Some(32)),
    Ipv4SrcIp      => ("IPV4_SRC_IP",        Binary,    Some(32)),
    Ipv4DstIp      => ("IPV4_DST_IP",        Binary,    Some(32)),
    Ipv4Id         => ("IPV4_ID",            Binary,    Some(16)),
    Ipv4Offset     => ("IPV4_OFFSET",        Binary,    Some(13)),
    Ipv4Ttl        => ("IPV4_TTL",           Binary,    Some(8)),
    Ipv4Checksum   => ("IPV4_CHECKSUM",      Binary,    Some(16)),
    TcpSrcPort     => ("TCP_SRC_PORT",       Numeric,   Some(16)),
    TcpDstPort     => ("TCP_DST_PORT",       Numeric,   Some(16)),
    TcpSequence    => ("TCP_SEQUENCE",       Binary,    Some(32)),
    TcpAckNo       => ("TCP_ACK_NO",         Binary,    Some(32)),
    TcpFlags       => ("TCP_FLAGS",          Binary,    Some(8)),
    TcpWindow      => ("TCP_WINDOW",         Binary,    Some(16)),
    TcpChecksum    => ("TCP_CHECKSUM",       Binary,    Some(16)),
    TcpUrgent      => ("TCP_URGENT",         Binary,    Some(16)),
    TcpOptions     => ("TCP_OPTIONS",        Binary,    None),
    UdpSrcPort     => ("UDP_SRC_PORT",       Numeric,   Some(16)),
    UdpDstPort     => ("UDP_DST_PORT",       Numeric,   Some(16)),
    UdpChecksum    => ("UDP_CHECKSUM",       Binary,    Some(16)),
    IcmpType       => ("ICMP_TYPE",          Binary,    Some(8)),
    IcmpCode       => ("ICMP_CODE",          Binary,    Some(8)),
    IcmpChecksum   => ("ICMP_CHECKSUM",      Binary,    Some(16)),
    IcmpIdentifier => ("ICMP_IDENTIFIER",    Binary,    Some(16)),
    IcmpSequence   => ("ICMP_SEQUENCE",      Binary,    Some(16)),
    IcmpGateway    => ("ICMP_GATEWAY",       Binary,    Some(32)),
    IcmpPointer    => ("ICMP_POINTER",       Binary,    Some(8)),
    IcmpTsOrig     => ("ICMP_TS_ORIG",       Binary,    Some(32)),
    IcmpTsRec      => ("ICMP_TS_REC",        Binary,    Some(32)),
    IcmpTsTrans    => ("ICMP_TS_TRANS",      Binary,    Some(32)),
    IcmpOrigData   => ("ICMP_ORIG_DATA",     Binary,    None),
    IcmpIpv4SrcIp  => ("ICMP_IPV4_SRC_IP",   Binary,    Some(32)),
    IcmpIpv4DstIp  => ("ICMP_IPV4_DST_IP",   Binary,    Some(32)),
    IcmpIpv4Id     => ("ICMP_IPV4_ID",       Binary,    Some(16)),
    IcmpIpv4Offset => ("ICMP_IPV4_OFFSET",   Binary,    Some(13)),
    IcmpIpv4Ttl    => ("ICMP_IPV4_TTL",      Binary,    Some(8)),
    IcmpIpv4Checksum => ("ICMP_IPV4_CHECKSUM", Binary,  Some(16)),
}

impl FieldPath {
    /// True for paths that hold an IPv4 address. The default compatibility
    /// matrix offers prefix-preserving anonymization only on these.
    pub fn is_ip_address(self) -> bool {
        matches!(
            self,
            FieldPath::Ipv4SrcIp
                | FieldPath::Ipv4DstIp
                | FieldPath::IcmpGateway
                | FieldPath::IcmpIpv4SrcIp
                | FieldPath::IcmpIpv4DstIp
        )
    }

    /// The transport protocol a path belongs to, if it is transport-specific.
    pub fn transport(self) -> Option<crate::pcap::Transport> {
        use crate::pcap::Transport;
        let name = self.name();
        if name.starts_with("TCP_") {
            Some(Transport::Tcp)
        } else if name.starts_with("UDP_") {
            Some(Transport::Udp)
        } else if name.starts_with("ICMP_") {
            Some(Transport::Icmp)
        } else {
            None
        }
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point in time, stored as whole microseconds since the Unix epoch.
///
/// Negative instants normalize like the rest: `sec()` is the floor division
/// and `usec()` is always in `0..1_000_000`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Timestamp {
    total_us: i64,
}

pub const MICROS_PER_SEC: i64 = 1_000_000;

impl Timestamp {
    pub fn new(sec: i64, usec: i64) -> Timestamp {
        Timestamp {
            total_us: sec * MICROS_PER_SEC + usec,
        }
    }

    pub fn from_micros(total_us: i64) -> Timestamp {
        Timestamp { total_us }
    }

    pub fn as_micros(self) -> i64 {
        self.total_us
    }

    pub fn sec(self) -> i64 {
        self.total_us.div_euclid(MICROS_PER_SEC)
    }

    pub fn usec(self) -> i64 {
        self.total_us.rem_euclid(MICROS_PER_SEC)
    }

    pub fn shifted(self, delta_us: i64) -> Timestamp {
        Timestamp {
            total_us: self.total_us + delta_us,
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.sec(), self.usec())
    }
}

/// A decoded field value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum FieldValue {
    /// Bit-string content; the vector length is the field width.
    Bits(Bits),
    /// Unsigned integer content with the base used for digit-level operations.
    Number { value: u64, base: u32 },
    /// Timestamp content.
    Timestamp(Timestamp),
}

impl FieldValue {
    /// A base-10 number, the decoding default for numeric fields.
    pub fn number(value: u64) -> FieldValue {
        FieldValue::Number { value, base: 10 }
    }

    pub fn from_bytes(bytes: &[u8]) -> FieldValue {
        FieldValue::Bits(Bits::from_slice(bytes))
    }

    /// Width in bits, when the value has an inherent one.
    pub fn width(&self) -> Option<usize> {
        match self {
            FieldValue::Bits(b) => Some(b.len()),
            _ => None,
        }
    }

    /// Reinterprets the value as a bit string of `width` bits.
    ///
    /// Numbers are laid out big-endian; a number too large for the width, a
    /// bit string of a different width, and any timestamp all return `None`.
    pub fn to_bits(&self, width: usize) -> Option<Bits> {
        match self {
            FieldValue::Bits(b) => (b.len() == width).then(|| b.clone()),
            FieldValue::Number { value, .. } => {
                if width > 64 || !fits_in_width(*value, width) {
                    return None;
                }
                let mut out = Bits::repeat(false, width);
                out.store_be::<u64>(*value);
                Some(out)
            }
            FieldValue::Timestamp(_) => None,
        }
    }

    /// Rebuilds a value of data type `dt` from raw bits.
    pub fn from_bits_as(dt: DataType, bits: Bits) -> Option<FieldValue> {
        match dt {
            DataType::Binary => Some(FieldValue::Bits(bits)),
            DataType::Numeric => {
                if bits.is_empty() || bits.len() > 64 {
                    return None;
                }
                Some(FieldValue::number(bits.load_be::<u64>()))
            }
            DataType::Timestamp => None,
        }
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Bits(b) => {
                write!(f, "0b")?;
                for bit in b.iter() {
                    write!(f, "{}", if *bit { '1' } else { '0' })?;
                }
                Ok(())
            }
            FieldValue::Number { value, .. } => write!(f, "{value}"),
            FieldValue::Timestamp(ts) => write!(f, "{ts}"),
        }
    }
}

/// True when `value` is representable in `width` bits.
pub fn fits_in_width(value: u64, width: usize) -> bool {
    width >= 64 || value < (1u64 << width)
}
