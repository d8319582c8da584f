//! Recorded IQ data: a simple binary container for pulse-by-range complex
//! samples, overlapped temporal windowing into snapshot vectors, and
//! cell-under-test / secondary-cell assembly across range bins.
//!
//! # Container format (`IQCUBE01`)
//!
//! Little-endian throughout:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `b"IQCUBE01"` |
//! | 8 | 8 | pulse count `P` (u64) |
//! | 16 | 8 | range-bin count `B` (u64) |
//! | 24 | 4 | metadata length `L` (u32) |
//! | 28 | L | UTF-8 JSON object of string-to-string metadata |
//! | 28+L | 8·P·B | samples: interleaved f32 pairs (I then Q), pulse-major |
//!
//! Pulse-major means all bins of pulse 0, then all bins of pulse 1, and so
//! on. The layout is deliberately trivial to write from any tooling.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::{C64, CVector};

/// File magic for the IQ container.
pub const IQ_MAGIC: &[u8; 8] = b"IQCUBE01";

/// Default guard cells on each side of the cell under test.
pub const DEFAULT_GUARD: usize = 2;

/// Errors from container parsing and snapshot assembly.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    /// Header bytes are missing, the magic does not match, the metadata is
    /// not valid JSON, or the declared sizes are inconsistent.
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    /// The file ends before the declared `P·B` samples.
    #[error("truncated payload: expected {expected} bytes of samples, got {got}")]
    TruncatedPayload { expected: u64, got: u64 },
    /// A sample decoded to NaN or infinity.
    #[error("non-finite sample at pulse {pulse}, bin {bin}")]
    NonFiniteSample { pulse: usize, bin: usize },
    /// Windowing parameters violate `0 ≤ overlap < N ≤ P`.
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    /// Not enough range bins for the requested secondary count and guards.
    #[error(
        "insufficient bins: need K + 2·guard + 1 = {required} range bins, have {available}"
    )]
    InsufficientBins { required: usize, available: usize },
    /// Underlying file I/O failure.
    #[error(transparent)]
    File(#[from] std::io::Error),
}

/// A pulse-by-range cube of complex IQ samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCube {
    pulses: usize,
    range_bins: usize,
    /// Pulse-major: `samples[p * range_bins + b]`.
    samples: Vec<C64>,
    /// Free-form descriptive fields (polarization, carrier, PRF, …),
    /// ordered for reproducible serialization.
    pub metadata: BTreeMap<String, String>,
}

impl IqCube {
    /// Builds a cube from pulse-major samples.
    pub fn new(
        pulses: usize,
        range_bins: usize,
        samples: Vec<C64>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, IoError> {
        if pulses == 0 || range_bins == 0 {
            return Err(IoError::MalformedHeader(
                "pulse and range-bin counts must be at least 1".into(),
            ));
        }
        let expected = pulses
            .checked_mul(range_bins)
            .ok_or_else(|| IoError::MalformedHeader("P·B overflows".into()))?;
        if samples.len() != expected {
            return Err(IoError::MalformedHeader(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.re.is_finite() && s.im.is_finite()) {
                return Err(IoError::NonFiniteSample {
                    pulse: i / range_bins,
                    bin: i % range_bins,
                });
            }
        }
        Ok(Self {
            pulses,
            range_bins,
            samples,
            metadata,
        })
    }

    pub fn pulses(&self) -> usize {
        self.pulses
    }

    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    /// Sample at pulse `p`, range bin `b`.
    pub fn sample(&self, p: usize, b: usize) -> C64 {
        self.samples[p * self.range_bins + b]
    }

    /// All samples, pulse-major.
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }
}

/// Reads an `IQCUBE01` container.
pub fn load_iq(path: impl AsRef<Path>) -> Result<IqCube, IoError> {
    let bytes = std::fs::read(path)?;
    parse_iq(&bytes)
}

/// Parses an `IQCUBE01` container from memory.
pub fn parse_iq(bytes: &[u8]) -> Result<IqCube, IoError> {
    let mut cursor = bytes;
    let mut magic = [0u8; 8];
    read_exact_header(&mut cursor, &mut magic)?;
    if &magic != IQ_MAGIC {
        return Err(IoError::MalformedHeader(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let pulses = read_u64(&mut cursor)?;
    let range_bins = read_u64(&mut cursor)?;
    let meta_len = read_u32(&mut cursor)? as usize;
    if pulses == 0 || range_bins == 0 {
        return Err(IoError::MalformedHeader(
            "pulse and range-bin counts must be at least 1".into(),
        ));
    }
    if cursor.len() < meta_len {
        return Err(IoError::MalformedHeader(format!(
            "metadata length {meta_len} exceeds remaining {} bytes",
            cursor.len()
        )));
    }
    let (meta_bytes, payload) = cursor.split_at(meta_len);
    let metadata: BTreeMap<String, String> = if meta_len == 0 {
        BTreeMap::new()
    } else {
        serde_json::from_slice(meta_bytes)
            .map_err(|e| IoError::MalformedHeader(format!("metadata is not a JSON map: {e}")))?
    };
    let count = pulses
        .checked_mul(range_bins)
        .ok_or_else(|| IoError::MalformedHeader("P·B overflows".into()))?;
    let expected_bytes = count
        .checked_mul(8)
        .ok_or_else(|| IoError::MalformedHeader("payload size overflows".into()))?;
    if (payload.len() as u64) < expected_bytes {
        return Err(IoError::TruncatedPayload {
            expected: expected_bytes,
            got: payload.len() as u64,
        });
    }
    let pulses = usize::try_from(pulses)
        .map_err(|_| IoError::MalformedHeader("pulse count exceeds address space".into()))?;
    let range_bins = usize::try_from(range_bins)
        .map_err(|_| IoError::MalformedHeader("bin count exceeds address space".into()))?;
    let mut samples = Vec::with_capacity(count as usize);
    for (i, chunk) in payload[..expected_bytes as usize].chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap()) as f64;
        let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
        if !(re.is_finite() && im.is_finite()) {
            return Err(IoError::NonFiniteSample {
                pulse: i / range_bins,
                bin: i % range_bins,
            });
        }
        samples.push(C64::new(re, im));
    }
    IqCube::new(pulses, range_bins, samples, metadata)
}

/// Writes an `IQCUBE01` container. Samples are stored as f32 pairs, so
/// magnitudes outside f32 range will not round-trip.
pub fn save_iq(cube: &IqCube, path: impl AsRef<Path>) -> Result<(), IoError> {
    let bytes = serialize_iq(cube)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Serializes an `IQCUBE01` container to memory.
pub fn serialize_iq(cube: &IqCube) -> Result<Vec<u8>, IoError> {
    let meta = serde_json::to_vec(&cube.metadata)
        .map_err(|e| IoError::MalformedHeader(format!("metadata serialization failed: {e}")))?;
    let meta_len = u32::try_from(meta.len())
        .map_err(|_| IoError::MalformedHeader("metadata too large for u32 length".into()))?;
    let mut out = Vec::with_capacity(28 + meta.len() + cube.samples.len() * 8);
    out.write_all(IQ_MAGIC)?;
    out.write_all(&(cube.pulses as u64).to_le_bytes())?;
    out.write_all(&(cube.range_bins as u64).to_le_bytes())?;
    out.write_all(&meta_len.to_le_bytes())?;
    out.write_all(&meta)?;
    for s in &cube.samples {
        out.write_all(&(s.re as f32).to_le_bytes())?;
        out.write_all(&(s.im as f32).to_le_bytes())?;
    }
    Ok(out)
}

fn read_exact_header(cursor: &mut &[u8], buf: &mut [u8]) -> Result<(), IoError> {
    cursor
        .read_exact(buf)
        .map_err(|_| IoError::MalformedHeader("file shorter than the fixed header".into()))
}

fn read_u64(cursor: &mut &[u8]) -> Result<u64, IoError> {
    let mut buf = [0u8; 8];
    read_exact_header(cursor, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(cursor: &mut &[u8]) -> Result<u32, IoError> {
    let mut buf = [0u8; 4];
    read_exact_header(cursor, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Per-range-bin snapshot vectors from overlapped temporal windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// `windows[bin][window]`, each an N-dimensional vector of consecutive
    /// pulses from that bin.
    windows: Vec<Vec<CVector>>,
    window_len: usize,
    stride: usize,
}

impl SnapshotSet {
    pub fn range_bins(&self) -> usize {
        self.windows.len()
    }

    /// Windows per bin (identical across bins).
    pub fn windows_per_bin(&self) -> usize {
        self.windows.first().map_or(0, Vec::len)
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Window stride in pulses (`N − overlap`).
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// The `w`-th window of range bin `b`.
    pub fn window(&self, bin: usize, w: usize) -> &CVector {
        &self.windows[bin][w]
    }
}

/// Number of length-`n` windows at stride `stride` fitting in `pulses`.
pub fn window_count(pulses: usize, n: usize, stride: usize) -> usize {
    (pulses - n) / stride + 1
}

/// Slices each range bin's pulse series into overlapping length-`n`
/// windows: starts at pulses `0, stride, 2·stride, …` with
/// `stride = n − overlap`.
pub fn window_cpi(cube: &IqCube, n: usize, overlap: usize) -> Result<SnapshotSet, IoError> {
    if n == 0 {
        return Err(IoError::InvalidWindow("window length must be at least 1".into()));
    }
    if overlap >= n {
        return Err(IoError::InvalidWindow(format!(
            "overlap {overlap} must be smaller than window length {n}"
        )));
    }
    if n > cube.pulses() {
        return Err(IoError::InvalidWindow(format!(
            "window length {n} exceeds pulse count {}",
            cube.pulses()
        )));
    }
    let stride = n - overlap;
    let per_bin = window_count(cube.pulses(), n, stride);
    let mut windows = Vec::with_capacity(cube.range_bins());
    for bin in 0..cube.range_bins() {
        let mut bin_windows = Vec::with_capacity(per_bin);
        for w in 0..per_bin {
            let start = w * stride;
            bin_windows.push(CVector::from_fn(n, |i, _| cube.sample(start + i, bin)));
        }
        windows.push(bin_windows);
    }
    Ok(SnapshotSet {
        windows,
        window_len: n,
        stride,
    })
}

/// Selects the `k` secondary range bins nearest to `cut_bin`, skipping
/// `guard` bins on each side. The split favors the low side (`(k+2)/2`
/// bins low, the rest high), and spills across when one side runs out of
/// bins.
///
/// Never selects the cell under test or a guard bin.
pub fn secondary_bins(
    total_bins: usize,
    cut_bin: usize,
    k: usize,
    guard: usize,
) -> Result<Vec<usize>, IoError> {
    let required = k + 2 * guard + 1;
    if total_bins < required {
        return Err(IoError::InsufficientBins {
            required,
            available: total_bins,
        });
    }
    if cut_bin >= total_bins {
        return Err(IoError::InvalidWindow(format!(
            "cut bin {cut_bin} out of range for {total_bins} bins"
        )));
    }
    if k == 0 {
        return Err(IoError::InvalidWindow(
            "need at least one secondary bin".into(),
        ));
    }
    // Candidates below the guard region, nearest first; likewise above.
    let low_avail = cut_bin.saturating_sub(guard);
    let high_avail = total_bins - 1 - (cut_bin + guard).min(total_bins - 1);
    if low_avail + high_avail < k {
        return Err(IoError::InsufficientBins {
            required,
            available: total_bins,
        });
    }
    // Split with the larger share low, then spill to whichever side has
    // room: 16 secondaries around a mid-field cell give 9 low + 7 high.
    let mut n_low = (k + 2) / 2;
    let mut n_high = k - n_low;
    if n_low > low_avail {
        n_high += n_low - low_avail;
        n_low = low_avail;
    }
    if n_high > high_avail {
        n_low += n_high - high_avail;
        n_high = high_avail;
    }
    let mut bins: Vec<usize> = Vec::with_capacity(k);
    for i in 0..n_low {
        bins.push(low_avail - 1 - i);
    }
    for i in 0..n_high {
        bins.push(cut_bin + guard + 1 + i);
    }
    bins.sort_unstable();
    Ok(bins)
}

/// One cell-under-test vector with its secondary-data matrix, both taken
/// from the same window index across range bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSnapshot {
    pub window_index: usize,
    pub z: CVector,
    /// N × K matrix, columns are secondary-bin windows ordered by bin index.
    pub secondaries: crate::CMatrix,
}

/// For every window index, pairs the cell under test at `cut_bin` with the
/// windows of the `k` nearest non-guard bins.
pub fn build_cut_secondary(
    snapshots: &SnapshotSet,
    cut_bin: usize,
    k: usize,
    guard: usize,
) -> Result<Vec<CutSnapshot>, IoError> {
    let bins = secondary_bins(snapshots.range_bins(), cut_bin, k, guard)?;
    let n = snapshots.window_len();
    let mut out = Vec::with_capacity(snapshots.windows_per_bin());
    for w in 0..snapshots.windows_per_bin() {
        let z = snapshots.window(cut_bin, w).clone();
        let mut secondaries = crate::CMatrix::zeros(n, k);
        for (j, &bin) in bins.iter().enumerate() {
            secondaries.set_column(j, snapshots.window(bin, w));
        }
        out.push(CutSnapshot {
            window_index: w,
            z,
            secondaries,
        });
    }
    Ok(out)
}
