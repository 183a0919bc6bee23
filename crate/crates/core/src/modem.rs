//! Bit-level source coding, per-user modulation maps and the
//! reference + data slot schedule.
//!
//! Users transmit a reference section first — every possible symbol tuple in
//! lexicographic order, each repeated `n_ref` slots — followed by one slot
//! per data symbol tuple. The receiver averages the reference slots into a
//! lookup bank and matches data slots against it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nvphys::Tone;

/// Default tone power for the frequency-keyed maps, dBm. Chosen so that two
/// users plus both Zeeman branches stay below the contrast cap at zero
/// field, keeping every bit tuple distinguishable.
pub const DEFAULT_TONE_POWER_DBM: f64 = -6.0;

/// Tone power of the Zeeman-band maps, dBm. The split branches halve the
/// resonant dip relative to zero field and only the aligned clusters
/// respond, so these links run harder; one branch alone cannot reach the
/// contrast cap.
pub const MULTIBAND_TONE_POWER_DBM: f64 = 0.0;

/// Tone power of the reference-free map, dBm. Thresholding a single ROI
/// needs a deep on-resonance dip, and with spectrally separated users the
/// contrast cap is never shared, so the links run harder.
pub const REFFREE_TONE_POWER_DBM: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ModemError {
    #[error("bitstream length {got} does not match {want} for a {width}x{height} image")]
    LengthMismatch { got: usize, want: usize, width: usize, height: usize },
    #[error("bitstreams have different lengths: {0} vs {1}")]
    UnequalLengths(usize, usize),
    #[error("empty bitstream for user {0}")]
    EmptyBitstream(usize),
    #[error("unknown modulation scheme `{0}`")]
    UnknownScheme(String),
    #[error("symbol value {value} outside the map for user {user}")]
    SymbolOutOfRange { user: usize, value: u8 },
    #[error("user count {got} does not match the symbol map ({want})")]
    UserCountMismatch { got: usize, want: usize },
}

/// An ordered sequence of bits, each stored as 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitstream(pub Vec<u8>);

impl Bitstream {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hex dump, MSB-first, zero-padded to a whole number of bytes.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.0.len().div_ceil(4));
        for chunk in self.0.chunks(8) {
            let mut byte = 0u8;
            for (i, b) in chunk.iter().enumerate() {
                byte |= (b & 1) << (7 - i);
            }
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Parse a hex dump produced by [`Bitstream::to_hex`], keeping `n_bits`.
    pub fn from_hex(hex: &str, n_bits: usize) -> Option<Self> {
        let mut bits = Vec::with_capacity(hex.len() * 4);
        for c in hex.trim().chars() {
            let v = c.to_digit(16)? as u8;
            for i in (0..4).rev() {
                bits.push((v >> i) & 1);
            }
        }
        if bits.len() < n_bits {
            return None;
        }
        bits.truncate(n_bits);
        Some(Bitstream(bits))
    }
}

/// An 8-bit grayscale message image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMessage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels, `width · height` bytes.
    pub pixels: Vec<u8>,
}

impl ImageMessage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        Self { width, height, pixels }
    }

    pub fn bit_len(&self) -> usize {
        self.width * self.height * 8
    }
}

/// Serialize an image row-major, MSB-first within each pixel.
pub fn encode_image(img: &ImageMessage) -> Bitstream {
    let mut bits = Vec::with_capacity(img.bit_len());
    for px in &img.pixels {
        for i in (0..8).rev() {
            bits.push((px >> i) & 1);
        }
    }
    Bitstream(bits)
}

/// Exact inverse of [`encode_image`].
pub fn decode_image(bits: &Bitstream, width: usize, height: usize) -> Result<ImageMessage, ModemError> {
    let want = width * height * 8;
    if bits.len() != want {
        return Err(ModemError::LengthMismatch { got: bits.len(), want, width, height });
    }
    let pixels = bits
        .0
        .chunks(8)
        .map(|chunk| chunk.iter().fold(0u8, |acc, b| (acc << 1) | (b & 1)))
        .collect();
    Ok(ImageMessage { width, height, pixels })
}

/// Bit error ratio between two equal-length streams.
pub fn ber(tx: &Bitstream, rx: &Bitstream) -> Result<f64, ModemError> {
    let (errors, total) = ber_counts(tx, rx)?;
    Ok(errors as f64 / total as f64)
}

/// Mismatch count and compared length.
pub fn ber_counts(tx: &Bitstream, rx: &Bitstream) -> Result<(usize, usize), ModemError> {
    if tx.len() != rx.len() {
        return Err(ModemError::UnequalLengths(tx.len(), rx.len()));
    }
    let errors = tx.0.iter().zip(rx.0.iter()).filter(|(a, b)| a != b).count();
    Ok((errors, tx.len()))
}

/// Modulation family of a symbol map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModKind {
    Fsk,
    Ask,
    Joint,
}

/// Per-user mapping from symbol values to tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolMap {
    pub kind: ModKind,
    /// Bits carried per slot per user: 1 for FSK/ASK, 2 for JOINT.
    pub bits_per_symbol: u8,
    /// `tones[user][symbol]`.
    pub tones: Vec<Vec<Tone>>,
}

impl SymbolMap {
    pub fn users(&self) -> usize {
        self.tones.len()
    }

    pub fn symbols_per_user(&self) -> usize {
        1usize << self.bits_per_symbol
    }

    pub fn tone_for(&self, user: usize, symbol: u8) -> Result<Tone, ModemError> {
        self.tones
            .get(user)
            .and_then(|t| t.get(symbol as usize))
            .copied()
            .ok_or(ModemError::SymbolOutOfRange { user, value: symbol })
    }

    /// Every symbol of every user must map to a distinct tone.
    pub fn validate(&self) -> bool {
        for user in &self.tones {
            if user.len() != self.symbols_per_user() {
                return false;
            }
            for (i, a) in user.iter().enumerate() {
                for b in &user[i + 1..] {
                    if a.freq_mhz == b.freq_mhz && a.power_dbm == b.power_dbm {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Two-user JOINT map over the Cartesian product of two frequencies and
    /// two power levels (4 symbols, 2 bits per slot). Symbol bit layout:
    /// the high bit selects the frequency, the low bit the power.
    pub fn joint(users: usize, freqs_mhz: [f64; 2], powers_dbm: [f64; 2]) -> Self {
        let per_user: Vec<Tone> = (0..4)
            .map(|s| Tone::new(freqs_mhz[(s >> 1) & 1], powers_dbm[s & 1]))
            .collect();
        Self { kind: ModKind::Joint, bits_per_symbol: 2, tones: vec![per_user; users] }
    }
}

/// The exact two-user tone maps used throughout the experiments.
///
/// * `fsk-zfs`    — both users 0→2870 MHz, 1→2900 MHz, default power
/// * `ask-zfs`    — carrier 2870 MHz; user 1 −15/−7 dBm, user 2 −15/0 dBm
/// * `fsk-low`    — both users 0→2700 MHz, 1→2776 MHz (lower Zeeman band)
/// * `fsk-high`   — both users 0→2963 MHz, 1→3020 MHz (upper Zeeman band)
/// * `fsk-reffree`— user 1 0→2946.5 MHz, user 2 0→2959.5 MHz, both 1→3000 MHz
pub fn paper_symbol_maps(scheme: &str) -> Result<SymbolMap, ModemError> {
    let p = DEFAULT_TONE_POWER_DBM;
    let fsk = |f0: f64, f1: f64| {
        vec![
            vec![Tone::new(f0, p), Tone::new(f1, p)],
            vec![Tone::new(f0, p), Tone::new(f1, p)],
        ]
    };
    let map = match scheme {
        "fsk-zfs" => SymbolMap { kind: ModKind::Fsk, bits_per_symbol: 1, tones: fsk(2870.0, 2900.0) },
        "ask-zfs" => SymbolMap {
            kind: ModKind::Ask,
            bits_per_symbol: 1,
            tones: vec![
                vec![Tone::new(2870.0, -15.0), Tone::new(2870.0, -7.0)],
                vec![Tone::new(2870.0, -15.0), Tone::new(2870.0, 0.0)],
            ],
        },
        "fsk-low" => {
            let mb = MULTIBAND_TONE_POWER_DBM;
            SymbolMap {
                kind: ModKind::Fsk,
                bits_per_symbol: 1,
                tones: vec![
                    vec![Tone::new(2700.0, mb), Tone::new(2776.0, mb)],
                    vec![Tone::new(2700.0, mb), Tone::new(2776.0, mb)],
                ],
            }
        }
        "fsk-high" => {
            let mb = MULTIBAND_TONE_POWER_DBM;
            SymbolMap {
                kind: ModKind::Fsk,
                bits_per_symbol: 1,
                tones: vec![
                    vec![Tone::new(2963.0, mb), Tone::new(3020.0, mb)],
                    vec![Tone::new(2963.0, mb), Tone::new(3020.0, mb)],
                ],
            }
        }
        "fsk-reffree" => {
            let rp = REFFREE_TONE_POWER_DBM;
            SymbolMap {
                kind: ModKind::Fsk,
                bits_per_symbol: 1,
                tones: vec![
                    vec![Tone::new(2946.5, rp), Tone::new(3000.0, rp)],
                    vec![Tone::new(2959.5, rp), Tone::new(3000.0, rp)],
                ],
            }
        }
        other => return Err(ModemError::UnknownScheme(other.to_string())),
    };
    Ok(map)
}

/// Kind of one transmission slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotKind {
    /// Reference slot carrying the given symbol tuple.
    Reference,
    /// Data slot.
    Data,
}

/// Per-user symbol schedule: the reference section followed by the padded
/// data section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub n_users: usize,
    pub symbols_per_user: usize,
    pub n_ref: usize,
    /// All `S^U` symbol tuples in lexicographic order.
    pub reference_tuples: Vec<Vec<u8>>,
    /// One symbol tuple per data slot (users padded with symbol 0).
    pub data_tuples: Vec<Vec<u8>>,
    /// Unpadded per-user data lengths, in bits.
    pub user_data_bits: Vec<usize>,
    pub bits_per_symbol: u8,
}

impl FrameLayout {
    /// Total reference slots: `S^U · n_ref`.
    pub fn reference_slots(&self) -> usize {
        self.reference_tuples.len() * self.n_ref
    }

    pub fn data_slots(&self) -> usize {
        self.data_tuples.len()
    }

    pub fn total_slots(&self) -> usize {
        self.reference_slots() + self.data_slots()
    }

    /// Tuple transmitted during an absolute slot index.
    pub fn tuple_at(&self, slot: usize) -> (&[u8], SlotKind) {
        let nref = self.reference_slots();
        if slot < nref {
            (&self.reference_tuples[slot / self.n_ref], SlotKind::Reference)
        } else {
            (&self.data_tuples[slot - nref], SlotKind::Data)
        }
    }

    /// Tones transmitted by each user for a symbol tuple.
    pub fn tones_for(&self, map: &SymbolMap, tuple: &[u8]) -> Result<Vec<Tone>, ModemError> {
        tuple
            .iter()
            .enumerate()
            .map(|(u, &s)| map.tone_for(u, s))
            .collect()
    }
}

/// Enumerate all `S^U` symbol tuples in lexicographic order.
pub fn enumerate_tuples(n_users: usize, symbols: usize) -> Vec<Vec<u8>> {
    let total = symbols.pow(n_users as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut tuple = vec![0u8; n_users];
        for u in (0..n_users).rev() {
            tuple[u] = (idx % symbols) as u8;
            idx /= symbols;
        }
        out.push(tuple);
    }
    out
}

/// Build the transmission schedule for a set of per-user bitstreams.
///
/// Bits are packed MSB-first into symbols; shorter user payloads are padded
/// with zero bits to the longest and the original lengths recorded so the
/// receiver can strip the padding again.
pub fn build_schedule(
    bitstreams: &[Bitstream],
    map: &SymbolMap,
    n_ref: usize,
) -> Result<FrameLayout, ModemError> {
    if bitstreams.len() != map.users() {
        return Err(ModemError::UserCountMismatch { got: bitstreams.len(), want: map.users() });
    }
    if n_ref == 0 {
        return Err(ModemError::EmptyBitstream(usize::MAX));
    }
    for (u, b) in bitstreams.iter().enumerate() {
        if b.is_empty() {
            return Err(ModemError::EmptyBitstream(u));
        }
    }
    let bps = map.bits_per_symbol as usize;
    let max_symbols = bitstreams
        .iter()
        .map(|b| b.len().div_ceil(bps))
        .max()
        .unwrap_or(0);

    let mut per_user_symbols: Vec<Vec<u8>> = Vec::with_capacity(bitstreams.len());
    for (u, b) in bitstreams.iter().enumerate() {
        let mut symbols = Vec::with_capacity(max_symbols);
        for s in 0..max_symbols {
            let mut value = 0u8;
            for k in 0..bps {
                let bit = b.0.get(s * bps + k).copied().unwrap_or(0);
                if bit > 1 {
                    return Err(ModemError::SymbolOutOfRange { user: u, value: bit });
                }
                value = (value << 1) | bit;
            }
            symbols.push(value);
        }
        // Validate every symbol against the map now, not at render time.
        for &s in &symbols {
            map.tone_for(u, s)?;
        }
        per_user_symbols.push(symbols);
    }

    let data_tuples: Vec<Vec<u8>> = (0..max_symbols)
        .map(|s| per_user_symbols.iter().map(|sy| sy[s]).collect())
        .collect();

    Ok(FrameLayout {
        n_users: map.users(),
        symbols_per_user: map.symbols_per_user(),
        n_ref,
        reference_tuples: enumerate_tuples(map.users(), map.symbols_per_user()),
        data_tuples,
        user_data_bits: bitstreams.iter().map(Bitstream::len).collect(),
        bits_per_symbol: map.bits_per_symbol,
    })
}

/// Unpack detected symbol tuples back into per-user bitstreams, dropping
/// the schedule's padding.
pub fn unpack_tuples(layout: &FrameLayout, tuples: &[Vec<u8>]) -> Vec<Bitstream> {
    let bps = layout.bits_per_symbol as usize;
    (0..layout.n_users)
        .map(|u| {
            let mut bits = Vec::with_capacity(layout.user_data_bits[u]);
            'outer: for tuple in tuples {
                let s = tuple[u];
                for k in (0..bps).rev() {
                    if bits.len() >= layout.user_data_bits[u] {
                        break 'outer;
                    }
                    bits.push((s >> k) & 1);
                }
            }
            Bitstream(bits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_payload_bit_counts() {
        let digits = ImageMessage::new(28, 28, vec![0; 28 * 28]);
        let faces = ImageMessage::new(32, 32, vec![0; 32 * 32]);
        assert_eq!(encode_image(&digits).len(), 6272);
        assert_eq!(encode_image(&faces).len(), 8192);
        assert_eq!(6272 + 8192, 14_464);
    }

    #[test]
    fn all_zero_and_all_one_images() {
        let zero = ImageMessage::new(4, 2, vec![0; 8]);
        assert!(encode_image(&zero).0.iter().all(|&b| b == 0));
        let ones = Bitstream(vec![1; 2 * 2 * 8]);
        let img = decode_image(&ones, 2, 2).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 255));
    }

    #[test]
    fn bit_order_is_msb_first_row_major() {
        let img = ImageMessage::new(2, 1, vec![0b1000_0000, 0b0000_0001]);
        let bits = encode_image(&img);
        assert_eq!(&bits.0[..8], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bits.0[8..], &[0, 0, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let bits = Bitstream(vec![0; 10]);
        assert!(matches!(decode_image(&bits, 2, 2), Err(ModemError::LengthMismatch { .. })));
    }

    #[test]
    fn ber_examples() {
        let a = Bitstream(vec![0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.0[3] ^= 1;
        assert_eq!(ber(&a, &b).unwrap(), 0.125);

        // 21 flips in 14,464 bits ≈ 0.1452%.
        let tx = Bitstream(vec![0; 14_464]);
        let mut rx = tx.clone();
        for i in 0..21 {
            rx.0[i * 600] = 1;
        }
        let r = ber(&tx, &rx).unwrap();
        assert!((r * 100.0 - 0.1452).abs() < 5e-4, "got {r}");
    }

    #[test]
    fn ber_is_symmetric_and_checks_length() {
        let a = Bitstream(vec![0, 1, 1]);
        let b = Bitstream(vec![1, 1, 0]);
        assert_eq!(ber(&a, &b).unwrap(), ber(&b, &a).unwrap());
        let c = Bitstream(vec![0]);
        assert!(ber(&a, &c).is_err());
    }

    #[test]
    fn paper_maps_match_the_published_values() {
        let fsk = paper_symbol_maps("fsk-zfs").unwrap();
        assert_eq!(fsk.tone_for(0, 0).unwrap().freq_mhz, 2870.0);
        assert_eq!(fsk.tone_for(0, 1).unwrap().freq_mhz, 2900.0);
        assert_eq!(fsk.tone_for(1, 0).unwrap().freq_mhz, 2870.0);

        let ask = paper_symbol_maps("ask-zfs").unwrap();
        assert_eq!(ask.tone_for(0, 1).unwrap().power_dbm, -7.0);
        let t = ask.tone_for(1, 1).unwrap();
        assert_eq!((t.freq_mhz, t.power_dbm), (2870.0, 0.0));

        let low = paper_symbol_maps("fsk-low").unwrap();
        assert_eq!(low.tone_for(1, 1).unwrap().freq_mhz, 2776.0);
        let high = paper_symbol_maps("fsk-high").unwrap();
        assert_eq!(high.tone_for(0, 0).unwrap().freq_mhz, 2963.0);
        assert_eq!(high.tone_for(0, 1).unwrap().freq_mhz, 3020.0);

        let rf = paper_symbol_maps("fsk-reffree").unwrap();
        assert_eq!(rf.tone_for(1, 0).unwrap().freq_mhz, 2959.5);
        assert_eq!(rf.tone_for(0, 0).unwrap().freq_mhz, 2946.5);
        assert_eq!(rf.tone_for(0, 1).unwrap().freq_mhz, 3000.0);

        for name in ["fsk-zfs", "ask-zfs", "fsk-low", "fsk-high", "fsk-reffree"] {
            assert!(paper_symbol_maps(name).unwrap().validate(), "{name} has duplicate tones");
        }
        assert!(paper_symbol_maps("qam-64").is_err());
    }

    #[test]
    fn two_user_fsk_reference_section() {
        let map = paper_symbol_maps("fsk-zfs").unwrap();
        let streams = vec![Bitstream(vec![1, 0]), Bitstream(vec![0, 1])];
        let layout = build_schedule(&streams, &map, 400).unwrap();
        assert_eq!(
            layout.reference_tuples,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(layout.reference_slots(), 4 * 400);
        assert_eq!(layout.data_slots(), 2);
        assert_eq!(layout.total_slots(), 1600 + 2);
    }

    #[test]
    fn single_user_minimal_schedule() {
        let map = SymbolMap {
            kind: ModKind::Fsk,
            bits_per_symbol: 1,
            tones: vec![vec![Tone::new(2870.0, -6.0), Tone::new(2900.0, -6.0)]],
        };
        let layout = build_schedule(&[Bitstream(vec![1])], &map, 1).unwrap();
        assert_eq!(layout.reference_slots(), 2);
        assert_eq!(layout.data_slots(), 1);
        let (tuple, kind) = layout.tuple_at(2);
        assert_eq!(tuple, &[1]);
        assert_eq!(kind, SlotKind::Data);
    }

    #[test]
    fn joint_reference_section_has_sixteen_tuples() {
        let map = SymbolMap::joint(2, [2870.0, 2900.0], [-15.0, -7.0]);
        assert!(map.validate());
        let streams = vec![Bitstream(vec![0, 1, 1, 0]), Bitstream(vec![1, 1, 0, 0])];
        let layout = build_schedule(&streams, &map, 3).unwrap();
        assert_eq!(layout.reference_tuples.len(), 16);
        assert_eq!(layout.reference_slots(), 48);
        // 4 bits at 2 bits/symbol → 2 data slots.
        assert_eq!(layout.data_slots(), 2);
    }

    #[test]
    fn padding_is_recorded_and_stripped() {
        let map = paper_symbol_maps("fsk-zfs").unwrap();
        let streams = vec![Bitstream(vec![1, 1, 1]), Bitstream(vec![0])];
        let layout = build_schedule(&streams, &map, 1).unwrap();
        assert_eq!(layout.data_slots(), 3);
        assert_eq!(layout.user_data_bits, vec![3, 1]);
        let rx = unpack_tuples(&layout, &layout.data_tuples);
        assert_eq!(rx[0], streams[0]);
        assert_eq!(rx[1], streams[1]);
    }

    #[test]
    fn schedule_rejects_bad_input() {
        let map = paper_symbol_maps("fsk-zfs").unwrap();
        assert!(build_schedule(&[Bitstream(vec![])], &map, 1).is_err());
        assert!(build_schedule(&[Bitstream(vec![1])], &map, 1).is_err()); // one user, two expected
        let bad = Bitstream(vec![2]);
        assert!(build_schedule(&[bad, Bitstream(vec![0])], &map, 1).is_err());
    }

    #[test]
    fn hex_dump_round_trip() {
        let bits = Bitstream(vec![1, 0, 1, 1, 0, 0, 1, 0, 1, 1]);
        let hex = bits.to_hex();
        assert_eq!(hex, "b2c0");
        assert_eq!(Bitstream::from_hex(&hex, 10).unwrap(), bits);
    }

    proptest! {
        #[test]
        fn image_round_trip(width in 1usize..12, height in 1usize..12, seed in 0u64..1000) {
            let mut state = seed;
            let pixels: Vec<u8> = (0..width * height).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as u8
            }).collect();
            let img = ImageMessage::new(width, height, pixels);
            let bits = encode_image(&img);
            prop_assert_eq!(bits.len(), width * height * 8);
            let back = decode_image(&bits, width, height).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn ber_invariant_under_shared_permutation(len in 2usize..64, seed in 0u64..500) {
            let mut state = seed.wrapping_add(1);
            let mut next = move || { state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493); state };
            let a: Vec<u8> = (0..len).map(|_| (next() >> 17) as u8 & 1).collect();
            let b: Vec<u8> = (0..len).map(|_| (next() >> 21) as u8 & 1).collect();
            // Fisher-Yates with the same draws for both streams.
            let mut perm: Vec<usize> = (0..len).collect();
            for i in (1..len).rev() {
                let j = (next() as usize) % (i + 1);
                perm.swap(i, j);
            }
            let pa: Vec<u8> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<u8> = perm.iter().map(|&i| b[i]).collect();
            let r1 = ber(&Bitstream(a), &Bitstream(b)).unwrap();
            let r2 = ber(&Bitstream(pa), &Bitstream(pb)).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-15);
        }

        #[test]
        fn reference_section_covers_the_tuple_space(users in 1usize..4, bps in 1u8..3) {
            let symbols = 1usize << bps;
            let tuples = enumerate_tuples(users, symbols);
            prop_assert_eq!(tuples.len(), symbols.pow(users as u32));
            let mut sorted = tuples.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), tuples.len());
            prop_assert_eq!(sorted, tuples); // already lexicographic
        }
    }
}
