//! NOMA decoding orders and SIC rates.
//!
//! Each MBS owns a distinct channel, so interference only comes from UEs
//! attached to the same MBS. MBS and UE indices are zero-based.

use std::cmp::Ordering;

use crate::channel::GainMatrix;

/// Sorts `ue_set` by `key` descending; equal keys keep ascending UE index.
fn order_by(ue_set: &[usize], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order = ue_set.to_vec();
    order.sort_unstable();
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(Ordering::Equal));
    order
}

/// Downlink decoding order at `mbs`: channel-to-noise ratio, descending.
pub fn order_downlink(gains: &GainMatrix, mbs: usize, noise_psd: f64, ue_set: &[usize]) -> Vec<usize> {
    order_by(ue_set, |i| gains.power(i, mbs) / noise_psd)
}

/// Uplink decoding order at `mbs`: received power, descending.
pub fn order_uplink(gains: &GainMatrix, mbs: usize, powers: &[f64], ue_set: &[usize]) -> Vec<usize> {
    order_by(ue_set, |i| powers[i] * gains.power(i, mbs))
}

/// UEs attached to `mbs`, ascending.
pub fn assigned(alloc: &[usize], mbs: usize) -> Vec<usize> {
    alloc
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == mbs).then_some(i))
        .collect()
}

/// Downlink rates of every UE under `alloc` (bits/s).
///
/// UE `i` at position `k` of its MBS's order sees interference
/// `sum_{j<k} p_j |g_i|^2` from the UEs decoded before it.
pub fn downlink_rates(
    gains: &GainMatrix,
    dl_powers: &[f64],
    alloc: &[usize],
    bandwidth: f64,
    noise_psd: f64,
) -> Vec<f64> {
    let mut rates = vec![0.0; alloc.len()];
    let noise = bandwidth * noise_psd;
    for mbs in 0..gains.m_mbs {
        let order = order_downlink(gains, mbs, noise_psd, &assigned(alloc, mbs));
        let mut earlier_power = 0.0;
        for &i in &order {
            let g2 = gains.power(i, mbs);
            let sinr = dl_powers[i] * g2 / (earlier_power * g2 + noise);
            rates[i] = bandwidth * sinr.log2_1p();
            earlier_power += dl_powers[i];
        }
    }
    rates
}

/// Uplink rates of every UE under `alloc` (bits/s).
///
/// UE `i` at position `k` sees interference from the UEs decoded after it,
/// `sum_{j>k} p_j |g_j|^2`.
pub fn uplink_rates(
    gains: &GainMatrix,
    ul_powers: &[f64],
    alloc: &[usize],
    bandwidth: f64,
    noise_psd: f64,
) -> Vec<f64> {
    let mut rates = vec![0.0; alloc.len()];
    let noise = bandwidth * noise_psd;
    for mbs in 0..gains.m_mbs {
        let order = order_uplink(gains, mbs, ul_powers, &assigned(alloc, mbs));
        let mut later_power = 0.0;
        for &i in order.iter().rev() {
            let received = ul_powers[i] * gains.power(i, mbs);
            rates[i] = bandwidth * (received / (later_power + noise)).log2_1p();
            later_power += received;
        }
    }
    rates
}

trait Log2OnePlus {
    fn log2_1p(self) -> f64;
}

impl Log2OnePlus for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downlink_order_sorts_descending() {
        // Gains chosen so |g|^2 = [4, 1, 9].
        let g = GainMatrix::from_real(3, 1, &[2.0, 1.0, 3.0]);
        assert_eq!(order_downlink(&g, 0, 1.0, &[0, 1, 2]), vec![2, 0, 1]);
        assert_eq!(order_downlink(&g, 0, 1.0, &[1]), vec![1]);
    }

    #[test]
    fn ties_break_by_index() {
        let g = GainMatrix::from_real(6, 1, &[1.0, 0.0, 2.0, 0.0, 0.0, 2.0]);
        assert_eq!(order_downlink(&g, 0, 1.0, &[5, 2]), vec![2, 5]);
        assert_eq!(order_uplink(&g, 0, &[1.0; 6], &[5, 2]), vec![2, 5]);
    }

    #[test]
    fn uplink_order_sorts_received_power() {
        let g = GainMatrix::from_real(3, 1, &[1.0, 2.0, 1.0]);
        // Received: [2*1, 2*4, 5*1] = [2, 8, 5].
        assert_eq!(order_uplink(&g, 0, &[2.0, 2.0, 5.0], &[0, 1, 2]), vec![1, 2, 0]);
        assert_eq!(order_uplink(&g, 0, &[2.0, 2.0, 5.0], &[2]), vec![2]);
    }

    #[test]
    fn unit_snr_gives_bandwidth() {
        let b = 1e6;
        let psd = 1e-9;
        // p |g|^2 = B sigma^2 = 1e-3.
        let g = GainMatrix::from_real(1, 1, &[1e-3f64.sqrt()]);
        let dl = downlink_rates(&g, &[1.0], &[0], b, psd);
        let ul = uplink_rates(&g, &[1.0], &[0], b, psd);
        assert!((dl[0] - b).abs() < 1e-6);
        assert!((ul[0] - b).abs() < 1e-6);
    }

    #[test]
    fn first_decoded_and_last_decoded_are_clean() {
        let b = 1e6;
        let psd = 1e-9;
        let g = GainMatrix::from_real(2, 1, &[0.1, 0.05]);
        let p = [2.0, 3.0];
        let dl = downlink_rates(&g, &p, &[0, 0], b, psd);
        let clean0 = b * (1.0 + p[0] * 0.01 / (b * psd)).log2();
        assert!((dl[0] - clean0).abs() <= 1e-9 * clean0);
        // Uplink: UE 0 receives 0.02, UE 1 receives 0.0075, UE 1 is last.
        let ul = uplink_rates(&g, &p, &[0, 0], b, psd);
        let clean1 = b * (1.0 + p[1] * 0.0025 / (b * psd)).log2();
        assert!((ul[1] - clean1).abs() <= 1e-9 * clean1);
    }

    #[test]
    fn cells_are_isolated() {
        let g = GainMatrix::from_real(3, 2, &[0.1, 0.2, 0.3, 0.05, 0.2, 0.2]);
        let alloc = [0, 1, 0];
        let a = uplink_rates(&g, &[3.0, 4.0, 5.0], &alloc, 1e6, 1e-9);
        let b = uplink_rates(&g, &[3.0, 9.0, 5.0], &alloc, 1e6, 1e-9);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[2], b[2]);
        assert!(b[1] > a[1]);
    }
}
