//! Bit-exact codec for BGP UPDATE messages carrying the FC path attribute,
//! plus the `.fcbgp` fixture container.
//!
//! The FC attribute is TLV-shaped: one flags octet (O/T/P/E), the type code
//! octet, a 1- or 2-octet length selected by the E bit, and the value. Note
//! the E bit here follows the FC rule — it is set exactly when the attribute
//! carries more than one FC record — which diverges from stock BGP semantics
//! where E only widens the length field. The codec is self-contained in the
//! simulator, so the divergence is deliberate and documented here.
//!
//! FC record framing inside the value: prev(4) ‖ cur(4) ‖ next(4) ‖
//! sig-len(2) ‖ sig, all big-endian.

use thiserror::Error;

use crate::fc::ForwardingCommitment;
use crate::trust::{AsNumber, Prefix};

/// Not yet assigned by IANA; may collide with future assignments.
pub const FC_ATTR_TYPE_CODE: u8 = 41;

pub const FLAG_OPTIONAL: u8 = 0x80;
pub const FLAG_TRANSITIVE: u8 = 0x40;
pub const FLAG_PARTIAL: u8 = 0x20;
pub const FLAG_EXTENDED: u8 = 0x10;

pub const FIXTURE_MAGIC: [u8; 4] = *b"FCBG";
pub const FIXTURE_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed message at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("attribute value of {0} bytes exceeds length capacity")]
    Overflow(usize),
    #[error("invalid update: {0}")]
    Invalid(&'static str),
}

fn malformed(offset: usize, reason: impl Into<String>) -> WireError {
    WireError::Malformed {
        offset,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Announcement,
    Withdrawal,
}

/// A BGP path attribute. For non-FC codes the value octets are opaque and
/// preserved verbatim across decode/encode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathAttribute {
    pub flags: u8,
    pub type_code: u8,
    pub value: Vec<u8>,
}

impl PathAttribute {
    pub fn is_fc(&self) -> bool {
        self.type_code == FC_ATTR_TYPE_CODE
    }

    pub fn extended(&self) -> bool {
        self.flags & FLAG_EXTENDED != 0
    }
}

/// The subset of a BGP UPDATE the protocol logic consumes. Full RFC 4271
/// framing (header, withdrawn-routes section) is reduced to these fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BgpUpdate {
    pub kind: UpdateKind,
    pub prefix: Prefix,
    /// Origin first.
    pub as_path: Vec<AsNumber>,
    pub attributes: Vec<PathAttribute>,
}

fn fc_record_bytes(fc: &ForwardingCommitment, out: &mut Vec<u8>) {
    out.extend_from_slice(&fc.previous.0.to_be_bytes());
    out.extend_from_slice(&fc.current.0.to_be_bytes());
    out.extend_from_slice(&fc.next.0.to_be_bytes());
    out.extend_from_slice(&(fc.signature.len() as u16).to_be_bytes());
    out.extend_from_slice(&fc.signature);
}

/// Encodes a list of FCs as the FC path attribute value.
pub fn fc_attribute_value(fcs: &[ForwardingCommitment]) -> Vec<u8> {
    let mut out = Vec::new();
    for fc in fcs {
        fc_record_bytes(fc, &mut out);
    }
    out
}

/// Builds the FC path attribute. E is set exactly when more than one FC is
/// carried.
pub fn make_fc_attribute(fcs: &[ForwardingCommitment]) -> PathAttribute {
    let mut flags = FLAG_OPTIONAL | FLAG_TRANSITIVE | FLAG_PARTIAL;
    if fcs.len() > 1 {
        flags |= FLAG_EXTENDED;
    }
    PathAttribute {
        flags,
        type_code: FC_ATTR_TYPE_CODE,
        value: fc_attribute_value(fcs),
    }
}

/// Parses FC records out of an FC attribute value. `base` is the attribute
/// value's offset inside the enclosing message, for error reporting.
pub fn parse_fc_records(value: &[u8], base: usize) -> Result<Vec<ForwardingCommitment>, WireError> {
    let mut fcs = Vec::new();
    let mut at = 0usize;
    while at < value.len() {
        if value.len() - at < 14 {
            return Err(malformed(base + at, "truncated FC record header"));
        }
        let word = |i: usize| u32::from_be_bytes(value[i..i + 4].try_into().unwrap());
        let previous = AsNumber(word(at));
        let current = AsNumber(word(at + 4));
        let next = AsNumber(word(at + 8));
        let sig_len = u16::from_be_bytes(value[at + 12..at + 14].try_into().unwrap()) as usize;
        at += 14;
        if value.len() - at < sig_len {
            return Err(malformed(base + at, "truncated FC signature"));
        }
        fcs.push(ForwardingCommitment {
            previous,
            current,
            next,
            signature: value[at..at + sig_len].to_vec(),
        });
        at += sig_len;
    }
    Ok(fcs)
}

impl BgpUpdate {
    pub fn announcement(
        prefix: Prefix,
        as_path: Vec<AsNumber>,
        fcs: &[ForwardingCommitment],
    ) -> Result<Self, WireError> {
        if as_path.is_empty() {
            return Err(WireError::Invalid("announcement with empty AS path"));
        }
        let mut attributes = Vec::new();
        if !fcs.is_empty() {
            if fcs.len() > as_path.len() {
                return Err(WireError::Invalid("more FCs than AS path hops"));
            }
            attributes.push(make_fc_attribute(fcs));
        }
        Ok(BgpUpdate {
            kind: UpdateKind::Announcement,
            prefix,
            as_path,
            attributes,
        })
    }

    pub fn withdrawal(prefix: Prefix, as_path: Vec<AsNumber>) -> Self {
        BgpUpdate {
            kind: UpdateKind::Withdrawal,
            prefix,
            as_path,
            attributes: Vec::new(),
        }
    }

    pub fn fc_attribute(&self) -> Option<&PathAttribute> {
        self.attributes.iter().find(|a| a.is_fc())
    }

    /// Decoded FC list, empty when no FC attribute is present.
    pub fn fcs(&self) -> Result<Vec<ForwardingCommitment>, WireError> {
        match self.fc_attribute() {
            Some(attr) => parse_fc_records(&attr.value, 0),
            None => Ok(Vec::new()),
        }
    }

    fn validate(&self) -> Result<(), WireError> {
        if self.kind == UpdateKind::Announcement && self.as_path.is_empty() {
            return Err(WireError::Invalid("announcement with empty AS path"));
        }
        let fc_attrs = self.attributes.iter().filter(|a| a.is_fc()).count();
        if fc_attrs > 1 {
            return Err(WireError::Invalid("more than one FC attribute"));
        }
        Ok(())
    }
}

/// Extends the AS path with a legacy AS, leaving every attribute byte
/// untouched. This is all a legacy speaker does with the FC attribute.
pub fn legacy_passthrough(update: &BgpUpdate, self_asn: AsNumber) -> BgpUpdate {
    let mut out = update.clone();
    out.as_path.push(self_asn);
    out
}

fn encode_attribute(attr: &PathAttribute, out: &mut Vec<u8>) -> Result<(), WireError> {
    out.push(attr.flags);
    out.push(attr.type_code);
    if attr.extended() {
        if attr.value.len() > u16::MAX as usize {
            return Err(WireError::Overflow(attr.value.len()));
        }
        out.extend_from_slice(&(attr.value.len() as u16).to_be_bytes());
    } else {
        if attr.value.len() > u8::MAX as usize {
            return Err(WireError::Overflow(attr.value.len()));
        }
        out.push(attr.value.len() as u8);
    }
    out.extend_from_slice(&attr.value);
    Ok(())
}

/// Deterministic octet encoding of an update.
pub fn encode_update(update: &BgpUpdate) -> Result<Vec<u8>, WireError> {
    update.validate()?;
    let mut out = Vec::new();
    out.push(match update.kind {
        UpdateKind::Announcement => 1,
        UpdateKind::Withdrawal => 2,
    });
    let addr = update.prefix.address_bytes();
    out.push(addr.len() as u8);
    out.extend_from_slice(addr);
    out.push(update.prefix.mask_len());
    out.extend_from_slice(&(update.as_path.len() as u16).to_be_bytes());
    for asn in &update.as_path {
        out.extend_from_slice(&asn.0.to_be_bytes());
    }
    out.push(update.attributes.len() as u8);
    for attr in &update.attributes {
        encode_attribute(attr, &mut out)?;
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.at < n {
            return Err(malformed(self.at, format!("truncated {what}")));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes an update; the inverse of [`encode_update`]. Unknown attribute
/// codes are preserved verbatim. The FC attribute is checked for flag and
/// E-bit consistency.
pub fn decode_update(octets: &[u8]) -> Result<BgpUpdate, WireError> {
    let mut r = Reader {
        buf: octets,
        at: 0,
    };
    let kind = match r.u8("kind")? {
        1 => UpdateKind::Announcement,
        2 => UpdateKind::Withdrawal,
        other => return Err(malformed(0, format!("unknown update kind {other}"))),
    };
    let addr_len = r.u8("address length")?;
    if addr_len != 4 && addr_len != 16 {
        return Err(malformed(r.at - 1, format!("bad address length {addr_len}")));
    }
    let addr_at = r.at;
    let addr = r.take(addr_len as usize, "address")?.to_vec();
    let mask_len = r.u8("mask length")?;
    let prefix = Prefix::from_bytes(&addr, mask_len)
        .map_err(|e| malformed(addr_at, format!("bad prefix: {e}")))?;
    let path_len = r.u16("AS path length")? as usize;
    let mut as_path = Vec::with_capacity(path_len);
    for _ in 0..path_len {
        as_path.push(AsNumber(r.u32("AS path entry")?));
    }
    let attr_count = r.u8("attribute count")? as usize;
    let mut attributes = Vec::with_capacity(attr_count);
    for _ in 0..attr_count {
        let flags_at = r.at;
        let flags = r.u8("attribute flags")?;
        let type_code = r.u8("attribute type")?;
        let len = if flags & FLAG_EXTENDED != 0 {
            r.u16("attribute length")? as usize
        } else {
            r.u8("attribute length")? as usize
        };
        let value_at = r.at;
        let value = r.take(len, "attribute value")?.to_vec();
        if type_code == FC_ATTR_TYPE_CODE {
            let expected = FLAG_OPTIONAL | FLAG_TRANSITIVE | FLAG_PARTIAL;
            if flags & expected != expected || flags & !(expected | FLAG_EXTENDED) != 0 {
                return Err(malformed(flags_at, format!("bad FC attribute flags {flags:#04x}")));
            }
            let fcs = parse_fc_records(&value, value_at)?;
            let extended = flags & FLAG_EXTENDED != 0;
            if extended != (fcs.len() > 1) {
                return Err(malformed(
                    flags_at,
                    format!("E bit {} contradicts FC count {}", extended as u8, fcs.len()),
                ));
            }
        }
        attributes.push(PathAttribute {
            flags,
            type_code,
            value,
        });
    }
    if r.at != octets.len() {
        return Err(malformed(r.at, "trailing bytes"));
    }
    let update = BgpUpdate {
        kind,
        prefix,
        as_path,
        attributes,
    };
    update.validate().map_err(|e| malformed(0, e.to_string()))?;
    Ok(update)
}

/// A record in a `.fcbgp` fixture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FixtureRecord {
    /// Encoded [`BgpUpdate`].
    Update(Vec<u8>),
    /// Encoded binding message.
    Binding(Vec<u8>),
    /// Encoded sync message.
    Sync(Vec<u8>),
}

impl FixtureRecord {
    fn tag(&self) -> u8 {
        match self {
            FixtureRecord::Update(_) => 1,
            FixtureRecord::Binding(_) => 2,
            FixtureRecord::Sync(_) => 3,
        }
    }

    pub fn payload(&self) -> &[u8] {
        match self {
            FixtureRecord::Update(b) | FixtureRecord::Binding(b) | FixtureRecord::Sync(b) => b,
        }
    }
}

pub fn write_fixture(records: &[FixtureRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FIXTURE_MAGIC);
    out.push(FIXTURE_VERSION);
    for rec in records {
        out.push(rec.tag());
        out.extend_from_slice(&(rec.payload().len() as u32).to_be_bytes());
        out.extend_from_slice(rec.payload());
    }
    out
}

pub fn read_fixture(bytes: &[u8]) -> Result<Vec<FixtureRecord>, WireError> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(4, "fixture magic")? != FIXTURE_MAGIC {
        return Err(malformed(0, "bad fixture magic"));
    }
    let version = r.u8("fixture version")?;
    if version != FIXTURE_VERSION {
        return Err(malformed(4, format!("unsupported fixture version {version}")));
    }
    let mut records = Vec::new();
    while r.at < bytes.len() {
        let tag = r.u8("record tag")?;
        let len = r.u32("record length")? as usize;
        let payload = r.take(len, "record payload")?.to_vec();
        records.push(match tag {
            1 => FixtureRecord::Update(payload),
            2 => FixtureRecord::Binding(payload),
            3 => FixtureRecord::Sync(payload),
            other => return Err(malformed(r.at - len - 5, format!("unknown record tag {other}"))),
        });
    }
    Ok(records)
}
