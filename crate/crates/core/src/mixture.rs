//! Time-frequency mixture over the outputs of several compressed beamformers.
//!
//! `select_min_power` picks, in every cell, the beamformer whose instantaneous
//! output power is lowest. `softmax_blend` instead weights all beamformers by
//! `exp(-P / temperature)` of their power accumulated over a trailing window.

use serde::{Deserialize, Serialize};

use crate::{Complex64, Error, Result};

/// Candidate outputs laid out `(projection, frame, bin)`, bin fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStack {
    data: Vec<Complex64>,
    n_p: usize,
    frames: usize,
    bins: usize,
}

impl OutputStack {
    pub fn new(n_p: usize, frames: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_p == 0 {
            return Err(Error::Empty("mixture needs at least one candidate".into()));
        }
        if data.len() != n_p * frames * bins {
            return Err(Error::Shape(format!("{} outputs for ({n_p}, {frames}, {bins})", data.len())));
        }
        Ok(Self { data, n_p, frames, bins })
    }

    /// Stacks per-projection `(frame, bin)` outputs.
    pub fn from_outputs(outputs: Vec<Vec<Complex64>>, frames: usize, bins: usize) -> Result<Self> {
        let n_p = outputs.len();
        Self::new(n_p, frames, bins, outputs.into_iter().flatten().collect())
    }

    pub fn num_candidates(&self) -> usize {
        self.n_p
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize, k: usize) -> Complex64 {
        self.data[(p * self.frames + i) * self.bins + k]
    }

    /// Same outputs with the candidate axis permuted: new candidate `q` is old `perm[q]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let block = self.frames * self.bins;
        let data = perm.iter().flat_map(|&p| self.data[p * block..(p + 1) * block].iter().copied()).collect();
        Self { data, ..*self }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { data: self.data.iter().map(|z| z * c).collect(), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Fixed(f64),
    /// Median accumulated power within each bin.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum MixtureRule {
    #[default]
    MinPower,
    SoftmaxAccumulated {
        /// Trailing window in frames; `None` accumulates the full history.
        window: Option<usize>,
        temperature: Temperature,
    },
}

impl MixtureRule {
    pub fn apply(&self, stack: &OutputStack) -> Result<MixtureDecision> {
        match *self {
            MixtureRule::MinPower => select_min_power(stack),
            MixtureRule::SoftmaxAccumulated { window, temperature } => softmax_blend(stack, window, temperature),
        }
    }
}

/// Per-cell choice and mixed output, laid out `(frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDecision {
    /// Selected candidate per cell (for softmax: the largest weight).
    pub gamma: Vec<usize>,
    pub z_mix: Vec<Complex64>,
    /// Blend weights `(projection, frame, bin)`; `None` for min-power selection.
    pub alpha: Option<Vec<f64>>,
    pub rule: MixtureRule,
    pub n_p: usize,
    pub frames: usize,
    pub bins: usize,
}

impl MixtureDecision {
    #[inline]
    pub fn gamma_at(&self, i: usize, k: usize) -> usize {
        self.gamma[i * self.bins + k]
    }

    #[inline]
    pub fn z_at(&self, i: usize, k: usize) -> Complex64 {
        self.z_mix[i * self.bins + k]
    }

    /// Blend weight of candidate `p` at `(i, k)`; one-hot for min-power.
    #[inline]
    pub fn weight(&self, p: usize, i: usize, k: usize) -> f64 {
        match &self.alpha {
            Some(a) => a[(p * self.frames + i) * self.bins + k],
            None => (self.gamma_at(i, k) == p) as u8 as f64,
        }
    }

    /// Joins decisions made on disjoint, consecutive bin ranges.
    pub fn concat_bins(parts: Vec<MixtureDecision>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Empty("no decisions to join".into()))?;
        let (n_p, frames, rule) = (first.n_p, first.frames, first.rule);
        if parts.iter().any(|d| d.n_p != n_p || d.frames != frames) {
            return Err(Error::Shape("decisions differ in candidates or frames".into()));
        }
        let bins: usize = parts.iter().map(|d| d.bins).sum();
        let mut gamma = vec![0; frames * bins];
        let mut z_mix = vec![Complex64::new(0.0, 0.0); frames * bins];
        let mut alpha = first.alpha.as_ref().map(|_| vec![0.0; n_p * frames * bins]);
        let mut offset = 0;
        for d in &parts {
            for i in 0..frames {
                for k in 0..d.bins {
                    gamma[i * bins + offset + k] = d.gamma_at(i, k);
                    z_mix[i * bins + offset + k] = d.z_at(i, k);
                    if let Some(a) = alpha.as_mut() {
                        for p in 0..n_p {
                            a[(p * frames + i) * bins + offset + k] = d.weight(p, i, k);
                        }
                    }
                }
            }
            offset += d.bins;
        }
        Ok(Self { gamma, z_mix, alpha, rule, n_p, frames, bins })
    }
}

/// `gamma[i,k] = argmin_p |z_p[i,k]|^2`, smallest `p` on ties. NaN outputs are
/// skipped; a cell with no finite candidate is an error.
pub fn select_min_power(stack: &OutputStack) -> Result<MixtureDecision> {
    let cells = stack.frames * stack.bins;
    let mut gamma = vec![0; cells];
    let mut z_mix = vec![Complex64::new(0.0, 0.0); cells];
    for i in 0..stack.frames {
        for k in 0..stack.bins {
            let mut best: Option<(usize, f64)> = None;
            for p in 0..stack.n_p {
                let power = stack.get(p, i, k).norm_sqr();
                if power.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, b)| power < b) {
                    best = Some((p, power));
                }
            }
            let (p, _) = best.ok_or(Error::AllNan { frame: i, bin: k })?;
            gamma[i * stack.bins + k] = p;
            z_mix[i * stack.bins + k] = stack.get(p, i, k);
        }
    }
    Ok(MixtureDecision { gamma, z_mix, alpha: None, rule: MixtureRule::MinPower, n_p: stack.n_p, frames: stack.frames, bins: stack.bins })
}

/// Softmax blend on trailing accumulated power. Candidates with NaN outputs
/// get zero weight from that frame on.
pub fn softmax_blend(stack: &OutputStack, window: Option<usize>, temperature: Temperature) -> Result<MixtureDecision> {
    if window == Some(0) {
        return Err(Error::Config("accumulation window must be at least one frame".into()));
    }
    if let Temperature::Fixed(t) = temperature {
        if !(t > 0.0) {
            return Err(Error::Config(format!("softmax temperature must be positive, got {t}")));
        }
    }
    let (n_p, frames, bins) = (stack.n_p, stack.frames, stack.bins);
    let mut gamma = vec![0; frames * bins];
    let mut z_mix = vec![Complex64::new(0.0, 0.0); frames * bins];
    let mut alpha = vec![0.0; n_p * frames * bins];
    let mut acc = vec![0.0; n_p * frames];

    for k in 0..bins {
        for p in 0..n_p {
            let mut running = 0.0;
            for i in 0..frames {
                running += stack.get(p, i, k).norm_sqr();
                if let Some(w) = window {
                    if i >= w {
                        running -= stack.get(p, i - w, k).norm_sqr();
                    }
                }
                acc[p * frames + i] = running;
            }
        }
        let temp = match temperature {
            Temperature::Fixed(t) => t,
            Temperature::Median => {
                let mut finite: Vec<f64> = acc.iter().copied().filter(|v| v.is_finite()).collect();
                finite.sort_by(f64::total_cmp);
                finite.get(finite.len() / 2).copied().unwrap_or(0.0)
            }
        };
        for i in 0..frames {
            let powers: Vec<f64> = (0..n_p).map(|p| acc[p * frames + i]).collect();
            let floor = powers.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            if floor.is_infinite() {
                return Err(Error::AllNan { frame: i, bin: k });
            }
            let raw: Vec<f64> = powers
                .iter()
                .map(|&pw| {
                    if !pw.is_finite() {
                        0.0
                    } else if temp > 0.0 {
                        (-(pw - floor) / temp).exp()
                    } else {
                        1.0
                    }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let mut z = Complex64::new(0.0, 0.0);
            let mut top = 0;
            for p in 0..n_p {
                let a = raw[p] / total;
                alpha[(p * frames + i) * bins + k] = a;
                if a > 0.0 {
                    z += stack.get(p, i, k) * a;
                }
                if raw[p] > raw[top] {
                    top = p;
                }
            }
            gamma[i * bins + k] = top;
            z_mix[i * bins + k] = z;
        }
    }
    Ok(MixtureDecision {
        gamma,
        z_mix,
        alpha: Some(alpha),
        rule: MixtureRule::SoftmaxAccumulated { window, temperature },
        n_p,
        frames,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_candidate_passes_through() {
        let stack = OutputStack::new(1, 2, 2, vec![c(1.0), c(-2.0), c(0.5), c(3.0)]).unwrap();
        let d = select_min_power(&stack).unwrap();
        assert!(d.gamma.iter().all(|&g| g == 0));
        assert_eq!(d.z_mix, vec![c(1.0), c(-2.0), c(0.5), c(3.0)]);
    }

    #[test]
    fn picks_the_quieter_candidate() {
        let stack = OutputStack::new(2, 1, 1, vec![c(2.0), c(1.0)]).unwrap();
        let d = select_min_power(&stack).unwrap();
        assert_eq!(d.gamma, vec![1]);
        assert_eq!(d.z_mix, vec![c(1.0)]);
    }

    #[test]
    fn ties_go_to_the_first_candidate() {
        let stack = OutputStack::new(3, 2, 1, vec![c(1.0), c(2.0), c(-1.0), c(2.0), c(1.0), c(-2.0)]).unwrap();
        assert_eq!(select_min_power(&stack).unwrap().gamma, vec![0, 0]);
    }

    #[test]
    fn nan_candidates_are_skipped() {
        let nan = Complex64::new(f64::NAN, 0.0);
        let stack = OutputStack::new(2, 1, 2, vec![nan, c(5.0), c(3.0), c(1.0)]).unwrap();
        let d = select_min_power(&stack).unwrap();
        assert_eq!(d.gamma, vec![1, 1]);
        let stack = OutputStack::new(2, 1, 1, vec![nan, nan]).unwrap();
        assert!(matches!(select_min_power(&stack), Err(Error::AllNan { .. })));
    }

    #[test]
    fn equal_power_gives_uniform_weights() {
        let stack = OutputStack::new(4, 3, 1, vec![c(1.0); 12]).unwrap();
        let d = softmax_blend(&stack, None, Temperature::Fixed(0.7)).unwrap();
        for p in 0..4 {
            for i in 0..3 {
                assert!((d.weight(p, i, 0) - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_two_candidate_closed_form() {
        // accumulated powers (0, t ln 3) give weights (3/4, 1/4)
        let t = 0.4;
        let stack = OutputStack::new(2, 1, 1, vec![c(0.0), c((t * 3f64.ln()).sqrt())]).unwrap();
        let d = softmax_blend(&stack, Some(1), Temperature::Fixed(t)).unwrap();
        assert!((d.weight(0, 0, 0) - 0.75).abs() < 1e-12);
        assert!((d.weight(1, 0, 0) - 0.25).abs() < 1e-12);
        assert!(softmax_blend(&stack, Some(1), Temperature::Fixed(0.0)).is_err());
        assert!(softmax_blend(&stack, Some(0), Temperature::Fixed(1.0)).is_err());
    }

    #[test]
    fn cold_softmax_matches_min_on_accumulated_power() {
        let data = vec![c(1.0), c(0.2), c(3.0), c(0.9), c(0.1), c(0.1), c(0.5), c(0.6), c(0.7)];
        let stack = OutputStack::new(3, 3, 1, data).unwrap();
        let d = softmax_blend(&stack, None, Temperature::Fixed(1e-6)).unwrap();
        // cumulative powers per candidate: p0 (1, 1.04, 10.04), p1 (0.81, 0.82, 0.83), p2 (0.25, 0.61, 1.1)
        assert_eq!(d.gamma, vec![2, 2, 1]);
        for i in 0..3 {
            let g = d.gamma[i];
            assert!((d.weight(g, i, 0) - 1.0).abs() < 1e-12);
            assert!((d.z_mix[i] - stack.get(g, i, 0)).norm() < 1e-12);
        }
    }

    #[test]
    fn median_temperature_runs() {
        let stack = OutputStack::new(2, 4, 2, (0..16).map(|v| c(v as f64 * 0.1)).collect()).unwrap();
        let d = softmax_blend(&stack, Some(2), Temperature::Median).unwrap();
        for i in 0..4 {
            for k in 0..2 {
                let s: f64 = (0..2).map(|p| d.weight(p, i, k)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_bins_reassembles() {
        let stack = OutputStack::new(2, 3, 2, (0..12).map(|v| c(((v * 7) % 5) as f64)).collect()).unwrap();
        let whole = select_min_power(&stack).unwrap();
        let parts: Vec<MixtureDecision> = (0..2)
            .map(|k| {
                let data = (0..2).flat_map(|p| (0..3).map(move |i| (p, i))).map(|(p, i)| stack.get(p, i, k)).collect();
                select_min_power(&OutputStack::new(2, 3, 1, data).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(MixtureDecision::concat_bins(parts).unwrap(), whole);
    }
}
