//! `.npz` archives: a zip file whose members are `<key>.npy` containers.
//!
//! Reading accepts stored and deflated members (including zip64 size
//! records). Writing emits stored members in key order with a fixed
//! timestamp so identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::io::Read;

use flate2::read::DeflateDecoder;

use super::array::ArrayRecord;
use super::npy::{read_npy, write_npy};
use super::ContainerError;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const ZIP64_EOCD_SIG: u32 = 0x0606_4b50;
const ZIP64_LOCATOR_SIG: u32 = 0x0706_4b50;
const METHOD_STORED: u16 = 0;
const METHOD_DEFLATE: u16 = 8;
/// 1980-01-01 00:00:00 in MS-DOS date format.
const DOS_DATE: u16 = (1 << 5) | 1;

pub type NpzArchive = BTreeMap<String, ArrayRecord>;

fn corrupt(msg: impl Into<String>) -> ContainerError {
    ContainerError::ZipCorrupt(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("record at offset {} runs past the end", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

struct Member {
    name: String,
    method: u16,
    crc: u32,
    compressed: u64,
    uncompressed: u64,
    local_offset: u64,
}

fn find_eocd(bytes: &[u8]) -> Result<usize, ContainerError> {
    if bytes.len() < 22 {
        return Err(corrupt("too short for an end-of-central-directory record"));
    }
    let lowest = bytes.len().saturating_sub(22 + u16::MAX as usize);
    (lowest..=bytes.len() - 22)
        .rev()
        .find(|&i| bytes[i..i + 4] == EOCD_SIG.to_le_bytes())
        .ok_or_else(|| corrupt("end-of-central-directory record not found"))
}

fn central_directory(bytes: &[u8]) -> Result<Vec<Member>, ContainerError> {
    let eocd = find_eocd(bytes)?;
    let mut c = Cursor::at(bytes, eocd + 4);
    let _disk = c.u16()?;
    let _cd_disk = c.u16()?;
    let _entries_here = c.u16()?;
    let mut entries = u64::from(c.u16()?);
    let _cd_size = c.u32()?;
    let mut cd_offset = u64::from(c.u32()?);

    if entries == 0xFFFF || cd_offset == 0xFFFF_FFFF {
        if eocd < 20 {
            return Err(corrupt("zip64 locator missing"));
        }
        let mut loc = Cursor::at(bytes, eocd - 20);
        if loc.u32()? != ZIP64_LOCATOR_SIG {
            return Err(corrupt("zip64 locator missing"));
        }
        let _disk = loc.u32()?;
        let record = usize::try_from(loc.u64()?).map_err(|_| corrupt("zip64 offset"))?;
        let mut z = Cursor::at(bytes, record);
        if z.u32()? != ZIP64_EOCD_SIG {
            return Err(corrupt("bad zip64 end-of-central-directory signature"));
        }
        let _size = z.u64()?;
        let _made = z.u16()?;
        let _needed = z.u16()?;
        let _disk = z.u32()?;
        let _cd_disk = z.u32()?;
        let _here = z.u64()?;
        entries = z.u64()?;
        let _cd_size = z.u64()?;
        cd_offset = z.u64()?;
    }

    let mut c = Cursor::at(
        bytes,
        usize::try_from(cd_offset).map_err(|_| corrupt("central directory offset"))?,
    );
    let mut members = Vec::new();
    for _ in 0..entries {
        if c.u32()? != CENTRAL_HEADER_SIG {
            return Err(corrupt("bad central directory signature"));
        }
        let _made = c.u16()?;
        let _needed = c.u16()?;
        let flags = c.u16()?;
        let method = c.u16()?;
        let _time = c.u16()?;
        let _date = c.u16()?;
        let crc = c.u32()?;
        let mut compressed = u64::from(c.u32()?);
        let mut uncompressed = u64::from(c.u32()?);
        let name_len = c.u16()? as usize;
        let extra_len = c.u16()? as usize;
        let comment_len = c.u16()? as usize;
        let _disk_start = c.u16()?;
        let _internal = c.u16()?;
        let _external = c.u32()?;
        let mut local_offset = u64::from(c.u32()?);
        let name = String::from_utf8(c.take(name_len)?.to_vec()).map_err(|_| corrupt("member name is not UTF-8"))?;
        let extra = c.take(extra_len)?;
        c.take(comment_len)?;
        if flags & 1 != 0 {
            return Err(ContainerError::UnsupportedLayout(format!("encrypted member '{name}'")));
        }

        // zip64 extended information: fields present only when the 32-bit slot is saturated
        let mut e = Cursor::at(extra, 0);
        while e.pos + 4 <= extra.len() {
            let id = e.u16()?;
            let len = e.u16()? as usize;
            let body = e.take(len)?;
            if id == 0x0001 {
                let mut z = Cursor::at(body, 0);
                if uncompressed == 0xFFFF_FFFF {
                    uncompressed = z.u64()?;
                }
                if compressed == 0xFFFF_FFFF {
                    compressed = z.u64()?;
                }
                if local_offset == 0xFFFF_FFFF {
                    local_offset = z.u64()?;
                }
            }
        }
        members.push(Member {
            name,
            method,
            crc,
            compressed,
            uncompressed,
            local_offset,
        });
    }
    Ok(members)
}

fn member_bytes(bytes: &[u8], m: &Member) -> Result<Vec<u8>, ContainerError> {
    let offset = usize::try_from(m.local_offset).map_err(|_| corrupt("local header offset"))?;
    let mut c = Cursor::at(bytes, offset);
    if c.u32()? != LOCAL_HEADER_SIG {
        return Err(corrupt(format!("bad local header for '{}'", m.name)));
    }
    c.take(22)?;
    let name_len = c.u16()? as usize;
    let extra_len = c.u16()? as usize;
    c.take(name_len + extra_len)?;
    let size = usize::try_from(m.compressed).map_err(|_| corrupt("member size"))?;
    let raw = c.take(size)?;
    let data = match m.method {
        METHOD_STORED => raw.to_vec(),
        METHOD_DEFLATE => {
            let mut out = Vec::with_capacity(m.uncompressed as usize);
            DeflateDecoder::new(raw)
                .read_to_end(&mut out)
                .map_err(|e| corrupt(format!("inflating '{}': {e}", m.name)))?;
            out
        }
        other => {
            return Err(ContainerError::UnsupportedLayout(format!(
                "compression method {other} for '{}'",
                m.name
            )))
        }
    };
    if data.len() as u64 != m.uncompressed {
        return Err(corrupt(format!("size mismatch for '{}'", m.name)));
    }
    if crc32fast::hash(&data) != m.crc {
        return Err(corrupt(format!("checksum mismatch for '{}'", m.name)));
    }
    Ok(data)
}

/// Parses every member of an `.npz` archive. Keys drop the `.npy` suffix.
pub fn read_npz(bytes: &[u8]) -> Result<NpzArchive, ContainerError> {
    let mut out = NpzArchive::new();
    for m in central_directory(bytes)? {
        let key = m.name.strip_suffix(".npy").unwrap_or(&m.name).to_string();
        if out.contains_key(&key) {
            return Err(ContainerError::DuplicateMember(key));
        }
        let data = member_bytes(bytes, &m)?;
        let record = read_npy(&data).map_err(|e| ContainerError::Member {
            name: key.clone(),
            source: Box::new(e),
        })?;
        out.insert(key, record);
    }
    Ok(out)
}

/// Serializes arrays as a zip of stored `<key>.npy` members.
pub fn write_npz(archive: &NpzArchive) -> Vec<u8> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    for (key, record) in archive {
        let name = format!("{key}.npy");
        let data = write_npy(record);
        let crc = crc32fast::hash(&data);
        let offset = out.len() as u32;

        out.extend_from_slice(&LOCAL_HEADER_SIG.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&METHOD_STORED.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&DOS_DATE.to_le_bytes());
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&data);

        central.extend_from_slice(&CENTRAL_HEADER_SIG.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&METHOD_STORED.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&DOS_DATE.to_le_bytes());
        central.extend_from_slice(&crc.to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(name.len() as u16).to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u32.to_le_bytes());
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name.as_bytes());
    }
    let cd_offset = out.len() as u32;
    let entries = archive.len() as u16;
    out.extend_from_slice(&central);
    out.extend_from_slice(&EOCD_SIG.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&entries.to_le_bytes());
    out.extend_from_slice(&entries.to_le_bytes());
    out.extend_from_slice(&(central.len() as u32).to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out
}
