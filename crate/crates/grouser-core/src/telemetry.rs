//! Sensor-node wire format and trial-log persistence.
//!
//! A frame is 2 sync bytes, a fixed 22-byte little-endian payload, and a
//! CRC-16/CCITT-FALSE over everything before the checksum: 26 bytes total.
//! The CRC is verified before any field is interpreted, so a corrupt frame
//! never surfaces as a version or range error. Trial logs are JSON lines:
//! one header, one line per frame, one summary footer.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

/// Frame start marker.
pub const SYNC: [u8; 2] = [0xAA, 0x55];
/// Current wire protocol version.
pub const WIRE_VERSION: u8 = 1;
/// Payload bytes after the sync marker.
pub const PAYLOAD_LEN: usize = 22;
/// Total frame length including sync and CRC.
pub const FRAME_LEN: usize = 2 + PAYLOAD_LEN + 2;
/// Highest encodable cam encoder value (12 bits used of the u16 field).
pub const CAM_COUNTS_MAX: u16 = 4095;

/// Frame status flag bits.
pub const FLAG_SATURATED: u8 = 1;
pub const FLAG_DESYNC: u8 = 1 << 1;
pub const FLAG_IMMOBILIZED: u8 = 1 << 2;
pub const FLAG_STALLED: u8 = 1 << 3;

/// Errors from framing and log persistence.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("sync marker not found at frame start")]
    BadSync,
    #[error("need {needed} bytes, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("crc mismatch: computed {computed:#06x}, stored {stored:#06x}")]
    CorruptFrame { computed: u16, stored: u16 },
    #[error("unsupported wire version {0}")]
    UnknownVersion(u8),
    #[error("cam counts {0} exceed the 12-bit encoder")]
    CamCountOutOfRange(u16),
    #[error("log io failed: {0}")]
    Io(String),
    #[error("log json failed: {0}")]
    Json(String),
    #[error("malformed log: {0}")]
    MalformedLog(&'static str),
}

/// One sensor snapshot in wire representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFrame {
    pub timestamp_us: u64,
    pub motor_counts: i32,
    pub cam_counts: u16,
    pub linear_counts: i32,
    pub current_ma: u16,
    pub flags: u8,
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
pub fn crc16_ccitt_false(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

/// Serializes a frame into its 26-byte wire form.
pub fn encode_frame(frame: &WireFrame) -> Result<[u8; FRAME_LEN], TelemetryError> {
    if frame.cam_counts > CAM_COUNTS_MAX {
        return Err(TelemetryError::CamCountOutOfRange(frame.cam_counts));
    }
    let mut out = [0u8; FRAME_LEN];
    out[0..2].copy_from_slice(&SYNC);
    out[2] = WIRE_VERSION;
    out[3..11].copy_from_slice(&frame.timestamp_us.to_le_bytes());
    out[11..15].copy_from_slice(&frame.motor_counts.to_le_bytes());
    out[15..17].copy_from_slice(&frame.cam_counts.to_le_bytes());
    out[17..21].copy_from_slice(&frame.linear_counts.to_le_bytes());
    out[21..23].copy_from_slice(&frame.current_ma.to_le_bytes());
    out[23] = frame.flags;
    let crc = crc16_ccitt_false(&out[..FRAME_LEN - 2]);
    out[24..26].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Deserializes one frame that must start at byte 0.
///
/// The CRC is validated before the version or any field range, so garbage
/// reports as corruption, not as a protocol mismatch.
pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame, TelemetryError> {
    if bytes.len() < FRAME_LEN {
        return Err(TelemetryError::TooShort { needed: FRAME_LEN, got: bytes.len() });
    }
    if bytes[0..2] != SYNC {
        return Err(TelemetryError::BadSync);
    }
    let computed = crc16_ccitt_false(&bytes[..FRAME_LEN - 2]);
    let stored = u16::from_le_bytes([bytes[24], bytes[25]]);
    if computed != stored {
        return Err(TelemetryError::CorruptFrame { computed, stored });
    }
    if bytes[2] != WIRE_VERSION {
        return Err(TelemetryError::UnknownVersion(bytes[2]));
    }
    let frame = WireFrame {
        timestamp_us: u64::from_le_bytes(bytes[3..11].try_into().expect("fixed slice")),
        motor_counts: i32::from_le_bytes(bytes[11..15].try_into().expect("fixed slice")),
        cam_counts: u16::from_le_bytes(bytes[15..17].try_into().expect("fixed slice")),
        linear_counts: i32::from_le_bytes(bytes[17..21].try_into().expect("fixed slice")),
        current_ma: u16::from_le_bytes(bytes[21..23].try_into().expect("fixed slice")),
        flags: bytes[23],
    };
    if frame.cam_counts > CAM_COUNTS_MAX {
        return Err(TelemetryError::CamCountOutOfRange(frame.cam_counts));
    }
    Ok(frame)
}

/// Incremental byte-stream decoder that resynchronizes on the sync marker.
#[derive(Debug, Default)]
pub struct StreamParser {
    buf: Vec<u8>,
}

impl StreamParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds bytes in and drains every decodable frame or framing error.
    ///
    /// After a CRC failure the scan resumes one byte past the failed sync
    /// marker, so a valid frame overlapping the corrupt span is still
    /// recovered. Semantically invalid frames with a valid CRC consume the
    /// whole frame.
    pub fn push_bytes(&mut self, bytes: &[u8]) -> Vec<Result<WireFrame, TelemetryError>> {
        self.buf.extend_from_slice(bytes);
        let mut events = Vec::new();
        let mut i = 0;
        loop {
            while i + 1 < self.buf.len() && self.buf[i..i + 2] != SYNC {
                i += 1;
            }
            if i + 1 >= self.buf.len() || i + FRAME_LEN > self.buf.len() {
                break;
            }
            match decode_frame(&self.buf[i..i + FRAME_LEN]) {
                Ok(frame) => {
                    events.push(Ok(frame));
                    i += FRAME_LEN;
                }
                Err(e @ TelemetryError::CorruptFrame { .. }) => {
                    events.push(Err(e));
                    i += 1;
                }
                Err(e) => {
                    events.push(Err(e));
                    i += FRAME_LEN;
                }
            }
        }
        self.buf.drain(..i);
        events
    }

    /// Bytes held back waiting for a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

/// Writes a trial log: one header line, one line per frame, one footer.
pub fn write_trial_log<H, Fr, Ft>(
    path: &Path,
    header: &H,
    frames: &[Fr],
    footer: &Ft,
) -> Result<(), TelemetryError>
where
    H: Serialize,
    Fr: Serialize,
    Ft: Serialize,
{
    let file = File::create(path).map_err(|e| TelemetryError::Io(e.to_string()))?;
    let mut out = BufWriter::new(file);
    let mut emit = |value: String| -> Result<(), TelemetryError> {
        writeln!(out, "{value}").map_err(|e| TelemetryError::Io(e.to_string()))
    };
    emit(serde_json::to_string(header).map_err(|e| TelemetryError::Json(e.to_string()))?)?;
    for frame in frames {
        emit(serde_json::to_string(frame).map_err(|e| TelemetryError::Json(e.to_string()))?)?;
    }
    emit(serde_json::to_string(footer).map_err(|e| TelemetryError::Json(e.to_string()))?)?;
    out.flush().map_err(|e| TelemetryError::Io(e.to_string()))
}

/// Reads a trial log back into (header, frames, footer).
pub fn read_trial_log<H, Fr, Ft>(path: &Path) -> Result<(H, Vec<Fr>, Ft), TelemetryError>
where
    H: DeserializeOwned,
    Fr: DeserializeOwned,
    Ft: DeserializeOwned,
{
    let file = File::open(path).map_err(|e| TelemetryError::Io(e.to_string()))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TelemetryError::Io(e.to_string()))?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    if lines.len() < 2 {
        return Err(TelemetryError::MalformedLog("need at least a header and a footer line"));
    }
    let header =
        serde_json::from_str(&lines[0]).map_err(|e| TelemetryError::Json(e.to_string()))?;
    let footer = serde_json::from_str(&lines[lines.len() - 1])
        .map_err(|e| TelemetryError::Json(e.to_string()))?;
    let mut frames = Vec::with_capacity(lines.len() - 2);
    for line in &lines[1..lines.len() - 1] {
        frames.push(serde_json::from_str(line).map_err(|e| TelemetryError::Json(e.to_string()))?);
    }
    Ok((header, frames, footer))
}

#[cfg(test)]
mod tests {
    use serde::Deserialize;

    use super::*;

    fn sample_frame() -> WireFrame {
        WireFrame {
            timestamp_us: 1_234_567,
            motor_counts: -4321,
            cam_counts: 2047,
            linear_counts: 100_000,
            current_ma: 1850,
            flags: FLAG_SATURATED | FLAG_IMMOBILIZED,
        }
    }

    #[test]
    fn crc_matches_the_reference_check_value() {
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
        assert_eq!(crc16_ccitt_false(b""), 0xFFFF);
        // Appending the CRC big-endian drives the register to zero.
        let mut data = b"123456789".to_vec();
        data.extend_from_slice(&0x29B1u16.to_be_bytes());
        assert_eq!(crc16_ccitt_false(&data), 0);
    }

    #[test]
    fn all_zero_frame_matches_the_golden_bytes() {
        let frame = WireFrame {
            timestamp_us: 0,
            motor_counts: 0,
            cam_counts: 0,
            linear_counts: 0,
            current_ma: 0,
            flags: 0,
        };
        let bytes = encode_frame(&frame).unwrap();
        assert_eq!(bytes.to_vec(), golden_zero_frame(), "layout drifted from the stored fixture");
        assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    /// Stored fixture: sync, version 1, zeroed payload, CRC.
    fn golden_zero_frame() -> Vec<u8> {
        let hex = "aa5501000000000000000000000000000000000000000000b9f6";
        (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn round_trip_preserves_extreme_field_values() {
        let frames = [
            sample_frame(),
            WireFrame {
                timestamp_us: u64::MAX,
                motor_counts: i32::MIN,
                cam_counts: CAM_COUNTS_MAX,
                linear_counts: i32::MAX,
                current_ma: u16::MAX,
                flags: 0xFF,
            },
            WireFrame {
                timestamp_us: 0,
                motor_counts: 0,
                cam_counts: 0,
                linear_counts: 100_000,
                current_ma: 0,
                flags: 0,
            },
        ];
        for frame in frames {
            let bytes = encode_frame(&frame).unwrap();
            assert_eq!(bytes.len(), FRAME_LEN);
            assert_eq!(decode_frame(&bytes).unwrap(), frame);
        }
    }

    #[test]
    fn encode_rejects_out_of_range_cam_counts() {
        let mut frame = sample_frame();
        frame.cam_counts = 4096;
        assert!(matches!(
            encode_frame(&frame),
            Err(TelemetryError::CamCountOutOfRange(4096))
        ));
    }

    #[test]
    fn decode_validates_structure_in_order() {
        let bytes = encode_frame(&sample_frame()).unwrap();
        assert!(matches!(
            decode_frame(&bytes[..10]),
            Err(TelemetryError::TooShort { .. })
        ));
        let mut bad_sync = bytes;
        bad_sync[0] = 0x00;
        assert!(matches!(decode_frame(&bad_sync), Err(TelemetryError::BadSync)));
        // A bad version with a bad CRC reports corruption, not version.
        let mut bad_both = bytes;
        bad_both[2] = 9;
        assert!(matches!(
            decode_frame(&bad_both),
            Err(TelemetryError::CorruptFrame { .. })
        ));
        // A bad version with a recomputed CRC reports the version.
        let mut bad_version = bytes;
        bad_version[2] = 9;
        let crc = crc16_ccitt_false(&bad_version[..FRAME_LEN - 2]);
        bad_version[24..26].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_frame(&bad_version),
            Err(TelemetryError::UnknownVersion(9))
        ));
        // Out-of-range cam counts with a valid CRC report the range.
        let mut bad_cam = bytes;
        bad_cam[15..17].copy_from_slice(&4096u16.to_le_bytes());
        let crc = crc16_ccitt_false(&bad_cam[..FRAME_LEN - 2]);
        bad_cam[24..26].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_frame(&bad_cam),
            Err(TelemetryError::CamCountOutOfRange(4096))
        ));
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let bytes = encode_frame(&sample_frame()).unwrap();
        for byte in 0..FRAME_LEN {
            for bit in 0..8 {
                let mut corrupted = bytes;
                corrupted[byte] ^= 1 << bit;
                let result = decode_frame(&corrupted);
                if byte < 2 {
                    assert!(
                        matches!(result, Err(TelemetryError::BadSync)),
                        "sync flip at {byte}:{bit} gave {result:?}"
                    );
                } else {
                    assert!(
                        matches!(result, Err(TelemetryError::CorruptFrame { .. })),
                        "payload flip at {byte}:{bit} gave {result:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn stream_parser_reassembles_dribbled_frames() {
        let mut parser = StreamParser::new();
        let mut wire = Vec::new();
        let mut frames = Vec::new();
        for k in 0..3u64 {
            let mut f = sample_frame();
            f.timestamp_us = k * 10_000;
            frames.push(f);
            wire.extend_from_slice(&encode_frame(&f).unwrap());
        }
        let mut seen = Vec::new();
        for chunk in wire.chunks(1) {
            for event in parser.push_bytes(chunk) {
                seen.push(event.unwrap());
            }
        }
        assert_eq!(seen, frames);
        assert_eq!(parser.pending(), 0);
    }

    #[test]
    fn truncated_frame_yields_one_error_then_the_next_frame() {
        let good = encode_frame(&sample_frame()).unwrap();
        let mut stream = good[..20].to_vec();
        stream.extend_from_slice(&good);
        let mut parser = StreamParser::new();
        let events = parser.push_bytes(&stream);
        assert_eq!(events.len(), 2, "{events:?}");
        assert!(matches!(events[0], Err(TelemetryError::CorruptFrame { .. })));
        assert_eq!(*events[1].as_ref().unwrap(), sample_frame());
    }

    #[test]
    fn garbage_between_frames_is_skipped() {
        let good = encode_frame(&sample_frame()).unwrap();
        let mut stream = vec![0x00, 0x13, 0x37, 0x99];
        stream.extend_from_slice(&good);
        stream.extend_from_slice(&[0x01, 0x02, 0x03]);
        stream.extend_from_slice(&good);
        let mut parser = StreamParser::new();
        let events = parser.push_bytes(&stream);
        let frames: Vec<_> = events.into_iter().filter_map(|e| e.ok()).collect();
        assert_eq!(frames.len(), 2);
    }

    #[test]
    fn corrupted_middle_frame_does_not_lose_neighbors() {
        let good = encode_frame(&sample_frame()).unwrap();
        let mut corrupt = good;
        corrupt[12] ^= 0x40;
        let mut stream = Vec::new();
        stream.extend_from_slice(&good);
        stream.extend_from_slice(&corrupt);
        stream.extend_from_slice(&good);
        let mut parser = StreamParser::new();
        let events = parser.push_bytes(&stream);
        let ok_count = events.iter().filter(|e| e.is_ok()).count();
        let err_count = events.iter().filter(|e| e.is_err()).count();
        assert_eq!(ok_count, 2);
        assert!(err_count >= 1);
    }

    #[test]
    fn unsupported_version_frame_is_consumed_whole() {
        let good = encode_frame(&sample_frame()).unwrap();
        let mut versioned = good;
        versioned[2] = 7;
        let crc = crc16_ccitt_false(&versioned[..FRAME_LEN - 2]);
        versioned[24..26].copy_from_slice(&crc.to_le_bytes());
        let mut stream = Vec::new();
        stream.extend_from_slice(&versioned);
        stream.extend_from_slice(&good);
        let mut parser = StreamParser::new();
        let events = parser.push_bytes(&stream);
        assert_eq!(events.len(), 2);
        assert!(matches!(events[0], Err(TelemetryError::UnknownVersion(7))));
        assert!(events[1].is_ok());
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Header {
        terrain: String,
        height_mm: f64,
        seed: u64,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        t_us: u64,
        pos: i32,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Footer {
        completed: bool,
        energy_j: f64,
    }

    #[test]
    fn trial_log_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial_0.jsonl");
        let header = Header { terrain: "pea_gravel".into(), height_mm: 7.0, seed: 42 };
        let frames = vec![Row { t_us: 0, pos: 0 }, Row { t_us: 10_000, pos: 55 }];
        let footer = Footer { completed: true, energy_j: 13.25 };
        write_trial_log(&path, &header, &frames, &footer).unwrap();
        let (h2, f2, ft2): (Header, Vec<Row>, Footer) = read_trial_log(&path).unwrap();
        assert_eq!(h2, header);
        assert_eq!(f2, frames);
        assert_eq!(ft2, footer);
    }

    #[test]
    fn malformed_logs_error_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.jsonl");
        std::fs::write(&path, "{\"terrain\":\"vinyl\",\"height_mm\":0.0,\"seed\":1}\n").unwrap();
        let result: Result<(Header, Vec<Row>, Footer), _> = read_trial_log(&path);
        assert!(matches!(result, Err(TelemetryError::MalformedLog(_))));
        let missing: Result<(Header, Vec<Row>, Footer), _> =
            read_trial_log(&dir.path().join("absent.jsonl"));
        assert!(matches!(missing, Err(TelemetryError::Io(_))));
    }
}
