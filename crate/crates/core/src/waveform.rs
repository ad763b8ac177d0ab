//! ADS-B packet chip sequences.
//!
//! A mode-S extended squitter is a 16-chip preamble followed by 112 data
//! bits, each Manchester-encoded into two chips. At 2 Msample/s one chip is
//! one sample, so a packet is exactly 240 samples long.

use rand::Rng;

use crate::error::{Error, Result};

/// Data bits per packet before line coding.
pub const PAYLOAD_BITS: usize = 112;
/// Chips in the Manchester-encoded data block.
pub const DATA_CHIPS: usize = 2 * PAYLOAD_BITS;
/// Fixed preamble chip pattern.
pub const PREAMBLE: [u8; 16] = [1, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0];
/// Total chips per packet.
pub const PACKET_CHIPS: usize = PREAMBLE.len() + DATA_CHIPS;
/// Number of ones in any packet: 4 preamble pulses plus one per data bit.
pub const PACKET_ONES: usize = 4 + PAYLOAD_BITS;
/// Number of zeros in any packet, excluding delay padding.
pub const PACKET_ZEROS: usize = PACKET_CHIPS - PACKET_ONES;

/// The 112-bit data block, treated as an opaque random payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadBits([u8; PAYLOAD_BITS]);

impl PayloadBits {
    pub fn new(bits: &[u8]) -> Result<Self> {
        if bits.len() != PAYLOAD_BITS {
            return Err(Error::Shape(format!(
                "payload must have {PAYLOAD_BITS} bits, got {}",
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Shape(format!("payload bit {b} is not binary")));
        }
        let mut out = [0u8; PAYLOAD_BITS];
        out.copy_from_slice(bits);
        Ok(Self(out))
    }

    /// Uniformly random payload; every one of the 2^112 blocks is equally likely.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut out = [0u8; PAYLOAD_BITS];
        for b in out.iter_mut() {
            *b = rng.random::<bool>() as u8;
        }
        Self(out)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }
}

/// Encodes each bit as a chip pair: 1 -> (1, 0), 0 -> (0, 1).
pub fn encode_manchester(payload: &PayloadBits) -> Vec<u8> {
    payload
        .bits()
        .iter()
        .flat_map(|&b| if b == 1 { [1, 0] } else { [0, 1] })
        .collect()
}

/// One packet: preamble followed by the Manchester-coded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketChips(Vec<u8>);

impl PacketChips {
    pub fn chips(&self) -> &[u8] {
        &self.0
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&c| c == 1).count()
    }
}

pub fn build_packet(payload: &PayloadBits) -> PacketChips {
    let mut chips = Vec::with_capacity(PACKET_CHIPS);
    chips.extend_from_slice(&PREAMBLE);
    chips.extend(encode_manchester(payload));
    debug_assert_eq!(chips.len(), PACKET_CHIPS);
    PacketChips(chips)
}

/// A packet placed at integer delay `delay` inside a window of
/// `PACKET_CHIPS + max_delay` samples, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayedWindow {
    pub chips: Vec<u8>,
    pub delay: usize,
    pub max_delay: usize,
}

impl DelayedWindow {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.chips.iter().filter(|&&c| c == 1).count()
    }
}

/// Window length for a given maximum integer delay.
pub fn window_len(max_delay: usize) -> usize {
    PACKET_CHIPS + max_delay
}

pub fn apply_delay(packet: &PacketChips, delay: usize, max_delay: usize) -> Result<DelayedWindow> {
    if delay > max_delay {
        return Err(Error::Domain(format!(
            "delay {delay} exceeds maximum delay {max_delay}"
        )));
    }
    let mut chips = vec![0u8; window_len(max_delay)];
    chips[delay..delay + PACKET_CHIPS].copy_from_slice(packet.chips());
    Ok(DelayedWindow {
        chips,
        delay,
        max_delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn manchester_all_ones_and_zeros() {
        let ones = PayloadBits::new(&[1; PAYLOAD_BITS]).unwrap();
        let chips = encode_manchester(&ones);
        assert_eq!(chips.len(), DATA_CHIPS);
        assert!(chips.chunks(2).all(|p| p == [1, 0]));
        assert_eq!(chips.iter().filter(|&&c| c == 1).count(), 112);

        let zeros = PayloadBits::new(&[0; PAYLOAD_BITS]).unwrap();
        let chips = encode_manchester(&zeros);
        assert!(chips.chunks(2).all(|p| p == [0, 1]));
        assert_eq!(chips.iter().filter(|&&c| c == 1).count(), 112);
    }

    #[test]
    fn payload_shape_errors() {
        assert!(matches!(PayloadBits::new(&[0; 111]), Err(Error::Shape(_))));
        assert!(matches!(PayloadBits::new(&[0; 113]), Err(Error::Shape(_))));
        let mut bad = [0u8; PAYLOAD_BITS];
        bad[5] = 2;
        assert!(matches!(PayloadBits::new(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn packet_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pkt = build_packet(&PayloadBits::random(&mut rng));
            assert_eq!(pkt.chips().len(), 240);
            assert_eq!(&pkt.chips()[..16], &PREAMBLE);
            assert_eq!(pkt.ones(), 116);
        }
    }

    #[test]
    fn all_zero_payload_ones_positions() {
        let pkt = build_packet(&PayloadBits::new(&[0; PAYLOAD_BITS]).unwrap());
        let ones: Vec<usize> = pkt
            .chips()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 1)
            .map(|(i, _)| i)
            .collect();
        let mut expected = vec![0, 2, 9, 11];
        expected.extend((0..PAYLOAD_BITS).map(|b| 16 + 2 * b + 1));
        assert_eq!(ones, expected);
    }

    #[test]
    fn delay_boundaries() {
        let pkt = build_packet(&PayloadBits::new(&[1; PAYLOAD_BITS]).unwrap());
        let w = apply_delay(&pkt, 0, 20).unwrap();
        assert_eq!(w.len(), 260);
        assert_eq!(&w.chips[..240], pkt.chips());
        assert!(w.chips[240..].iter().all(|&c| c == 0));

        let w = apply_delay(&pkt, 20, 20).unwrap();
        assert!(w.chips[..20].iter().all(|&c| c == 0));
        assert_eq!(&w.chips[20..], pkt.chips());

        let w = apply_delay(&pkt, 7, 20).unwrap();
        assert!(w.chips[..7].iter().all(|&c| c == 0));
        assert_eq!(&w.chips[7..247], pkt.chips());
        assert_eq!(w.chips[247..].len(), 13);
        assert!(w.chips[247..].iter().all(|&c| c == 0));
        assert_eq!(w.ones(), 116);
    }

    #[test]
    fn delay_out_of_range() {
        let pkt = build_packet(&PayloadBits::new(&[1; PAYLOAD_BITS]).unwrap());
        assert!(matches!(apply_delay(&pkt, 21, 20), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_fraction_converges_to_bernoulli_parameter() {
        let max_delay = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 400;
        let mut zeros = 0usize;
        let mut total = 0usize;
        for _ in 0..trials {
            let pkt = build_packet(&PayloadBits::random(&mut rng));
            let m = rng.random_range(0..=max_delay);
            let w = apply_delay(&pkt, m, max_delay).unwrap();
            zeros += w.len() - w.ones();
            total += w.len();
        }
        let p = (max_delay as f64 + 124.0) / (max_delay as f64 + 240.0);
        let frac = zeros as f64 / total as f64;
        let se = (p * (1.0 - p) / total as f64).sqrt();
        assert!((frac - p).abs() <= 3.0 * se, "frac {frac} p {p} se {se}");
    }

    proptest::proptest! {
        #[test]
        fn window_invariants(seed in 0u64..10_000, max_delay in 0usize..200, frac in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pkt = build_packet(&PayloadBits::random(&mut rng));
            let m = ((max_delay as f64) * frac).round() as usize;
            let w = apply_delay(&pkt, m, max_delay).unwrap();
            proptest::prop_assert_eq!(w.len(), 240 + max_delay);
            proptest::prop_assert_eq!(w.ones(), 116);
            proptest::prop_assert_eq!(&w.chips[m..m + 240], pkt.chips());
        }
    }
}
