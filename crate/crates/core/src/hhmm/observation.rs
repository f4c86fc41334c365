use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slot width in minutes.
pub const SLOT_MINUTES: u32 = 10;

/// Wall-clock anchor of slot 0 (14:00).
pub fn default_window_start() -> NaiveTime {
    NaiveTime::from_hms_opt(14, 0, 0).expect("valid time")
}

/// One aligned run of continuous and discrete channels with per-cell
/// missingness.
///
/// Values are stored row-major. Missing cells hold `0.0` / `0` in the data
/// arrays and `false` in the matching mask; callers should go through the
/// `Option` accessors rather than reading raw rows when missingness matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceRepr", into = "SequenceRepr")]
pub struct ObservationSequence {
    len: usize,
    n_cont: usize,
    n_disc: usize,
    continuous: Vec<f64>,
    discrete: Vec<u8>,
    cont_mask: Vec<bool>,
    disc_mask: Vec<bool>,
    slot_minutes: u32,
    window_start: NaiveTime,
}

impl ObservationSequence {
    /// Builds a sequence from per-slot rows where `None` marks a missing cell.
    ///
    /// `n_cont` and `n_disc` fix the channel counts so that empty inputs
    /// still carry a shape.
    pub fn from_rows(
        n_cont: usize,
        n_disc: usize,
        continuous: &[Vec<Option<f64>>],
        discrete: &[Vec<Option<u8>>],
    ) -> Result<Self> {
        let len = continuous.len().max(discrete.len());
        if n_cont > 0 && continuous.len() != len {
            return Err(Error::invalid("continuous rows do not cover every slot"));
        }
        if n_disc > 0 && discrete.len() != len {
            return Err(Error::invalid("discrete rows do not cover every slot"));
        }
        let mut seq = Self::empty(len, n_cont, n_disc);
        for t in 0..len {
            if n_cont > 0 {
                let row = &continuous[t];
                if row.len() != n_cont {
                    return Err(Error::invalid(format!(
                        "slot {t}: expected {n_cont} continuous values, got {}",
                        row.len()
                    )));
                }
                for (m, v) in row.iter().enumerate() {
                    seq.set_continuous(t, m, *v)?;
                }
            }
            if n_disc > 0 {
                let row = &discrete[t];
                if row.len() != n_disc {
                    return Err(Error::invalid(format!(
                        "slot {t}: expected {n_disc} discrete values, got {}",
                        row.len()
                    )));
                }
                for (m, v) in row.iter().enumerate() {
                    seq.set_discrete(t, m, *v);
                }
            }
        }
        Ok(seq)
    }

    /// Fully observed sequence.
    pub fn complete(continuous: &[Vec<f64>], discrete: &[Vec<u8>]) -> Result<Self> {
        let n_cont = continuous.first().map_or(0, Vec::len);
        let n_disc = discrete.first().map_or(0, Vec::len);
        let c: Vec<Vec<Option<f64>>> = continuous
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        let d: Vec<Vec<Option<u8>>> = discrete
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        Self::from_rows(n_cont, n_disc, &c, &d)
    }

    /// All cells missing.
    pub fn empty(len: usize, n_cont: usize, n_disc: usize) -> Self {
        Self {
            len,
            n_cont,
            n_disc,
            continuous: vec![0.0; len * n_cont],
            discrete: vec![0; len * n_disc],
            cont_mask: vec![false; len * n_cont],
            disc_mask: vec![false; len * n_disc],
            slot_minutes: SLOT_MINUTES,
            window_start: default_window_start(),
        }
    }

    pub fn with_timing(mut self, slot_minutes: u32, window_start: NaiveTime) -> Self {
        self.slot_minutes = slot_minutes;
        self.window_start = window_start;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_continuous(&self) -> usize {
        self.n_cont
    }

    pub fn n_discrete(&self) -> usize {
        self.n_disc
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn window_start(&self) -> NaiveTime {
        self.window_start
    }

    /// Raw continuous row; missing cells read as `0.0`.
    pub fn continuous_row(&self, t: usize) -> &[f64] {
        &self.continuous[t * self.n_cont..(t + 1) * self.n_cont]
    }

    pub fn continuous_mask(&self, t: usize) -> &[bool] {
        &self.cont_mask[t * self.n_cont..(t + 1) * self.n_cont]
    }

    pub fn discrete_row(&self, t: usize) -> &[u8] {
        &self.discrete[t * self.n_disc..(t + 1) * self.n_disc]
    }

    pub fn discrete_mask(&self, t: usize) -> &[bool] {
        &self.disc_mask[t * self.n_disc..(t + 1) * self.n_disc]
    }

    pub fn continuous_value(&self, t: usize, m: usize) -> Option<f64> {
        let k = t * self.n_cont + m;
        self.cont_mask[k].then_some(self.continuous[k])
    }

    pub fn discrete_value(&self, t: usize, m: usize) -> Option<u8> {
        let k = t * self.n_disc + m;
        self.disc_mask[k].then_some(self.discrete[k])
    }

    /// Sets a continuous cell. Non-finite observed values are rejected.
    pub fn set_continuous(&mut self, t: usize, m: usize, value: Option<f64>) -> Result<()> {
        let k = t * self.n_cont + m;
        match value {
            Some(v) if !v.is_finite() => Err(Error::invalid(format!(
                "non-finite continuous value at slot {t}, channel {m}"
            ))),
            Some(v) => {
                self.continuous[k] = v;
                self.cont_mask[k] = true;
                Ok(())
            }
            None => {
                self.continuous[k] = 0.0;
                self.cont_mask[k] = false;
                Ok(())
            }
        }
    }

    pub fn set_discrete(&mut self, t: usize, m: usize, value: Option<u8>) {
        let k = t * self.n_disc + m;
        self.discrete[k] = value.unwrap_or(0);
        self.disc_mask[k] = value.is_some();
    }

    /// Bitmask of observed continuous channels at slot `t` (bit `m` set when
    /// channel `m` is observed).
    pub fn observed_pattern(&self, t: usize) -> u64 {
        self.continuous_mask(t)
            .iter()
            .enumerate()
            .fold(0u64, |acc, (m, &o)| if o { acc | (1 << m) } else { acc })
    }

    /// Column view of one continuous channel.
    pub fn continuous_channel(&self, m: usize) -> Vec<Option<f64>> {
        (0..self.len).map(|t| self.continuous_value(t, m)).collect()
    }

    pub fn discrete_channel(&self, m: usize) -> Vec<Option<u8>> {
        (0..self.len).map(|t| self.discrete_value(t, m)).collect()
    }

    /// Fraction of missing cells in a continuous channel.
    pub fn continuous_missing_fraction(&self, m: usize) -> f64 {
        let missing = (0..self.len)
            .filter(|&t| !self.cont_mask[t * self.n_cont + m])
            .count();
        missing as f64 / self.len.max(1) as f64
    }

    pub fn discrete_missing_fraction(&self, m: usize) -> f64 {
        let missing = (0..self.len)
            .filter(|&t| !self.disc_mask[t * self.n_disc + m])
            .count();
        missing as f64 / self.len.max(1) as f64
    }

    pub fn observed_cells(&self) -> usize {
        self.cont_mask.iter().filter(|&&o| o).count() + self.disc_mask.iter().filter(|&&o| o).count()
    }
}

/// Row-oriented wire form with explicit mask arrays.
#[derive(Serialize, Deserialize)]
struct SequenceRepr {
    slot_minutes: u32,
    window_start: NaiveTime,
    continuous: Vec<Vec<f64>>,
    discrete: Vec<Vec<u8>>,
    continuous_mask: Vec<Vec<bool>>,
    discrete_mask: Vec<Vec<bool>>,
}

impl From<ObservationSequence> for SequenceRepr {
    fn from(s: ObservationSequence) -> Self {
        let rows_f = |t| s.continuous_row(t).to_vec();
        Self {
            slot_minutes: s.slot_minutes,
            window_start: s.window_start,
            continuous: (0..s.len).map(rows_f).collect(),
            discrete: (0..s.len).map(|t| s.discrete_row(t).to_vec()).collect(),
            continuous_mask: (0..s.len).map(|t| s.continuous_mask(t).to_vec()).collect(),
            discrete_mask: (0..s.len).map(|t| s.discrete_mask(t).to_vec()).collect(),
        }
    }
}

impl TryFrom<SequenceRepr> for ObservationSequence {
    type Error = Error;

    fn try_from(r: SequenceRepr) -> Result<Self> {
        let len = r.continuous.len();
        if r.discrete.len() != len || r.continuous_mask.len() != len || r.discrete_mask.len() != len {
            return Err(Error::invalid("data and mask arrays differ in length"));
        }
        let n_cont = r.continuous.first().map_or(0, Vec::len);
        let n_disc = r.discrete.first().map_or(0, Vec::len);
        let cont: Vec<Vec<Option<f64>>> = r
            .continuous
            .iter()
            .zip(&r.continuous_mask)
            .map(|(v, m)| {
                if v.len() != m.len() {
                    return Err(Error::invalid("continuous mask shape mismatch"));
                }
                Ok(v.iter().zip(m).map(|(&x, &o)| o.then_some(x)).collect())
            })
            .collect::<Result<_>>()?;
        let disc: Vec<Vec<Option<u8>>> = r
            .discrete
            .iter()
            .zip(&r.discrete_mask)
            .map(|(v, m)| {
                if v.len() != m.len() {
                    return Err(Error::invalid("discrete mask shape mismatch"));
                }
                Ok(v.iter().zip(m).map(|(&x, &o)| o.then_some(x)).collect())
            })
            .collect::<Result<_>>()?;
        let seq = Self::from_rows(n_cont, n_disc, &cont, &disc)?;
        Ok(seq.with_timing(r.slot_minutes, r.window_start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_accessors_follow_masks() {
        let seq = ObservationSequence::from_rows(
            2,
            1,
            &[vec![Some(0.5), None], vec![None, None]],
            &[vec![Some(1)], vec![None]],
        )
        .unwrap();
        assert_eq!(seq.continuous_value(0, 0), Some(0.5));
        assert_eq!(seq.continuous_value(0, 1), None);
        assert_eq!(seq.discrete_value(0, 0), Some(1));
        assert_eq!(seq.discrete_value(1, 0), None);
        assert_eq!(seq.observed_pattern(0), 0b01);
        assert_eq!(seq.observed_pattern(1), 0);
    }

    #[test]
    fn rejects_non_finite() {
        let err = ObservationSequence::from_rows(1, 0, &[vec![Some(f64::NAN)]], &[]);
        assert!(err.is_err());
    }

    #[test]
    fn json_keeps_masks() {
        let seq = ObservationSequence::from_rows(
            1,
            1,
            &[vec![Some(0.25)], vec![None]],
            &[vec![None], vec![Some(1)]],
        )
        .unwrap();
        let text = serde_json::to_string(&seq).unwrap();
        let back: ObservationSequence = serde_json::from_str(&text).unwrap();
        assert_eq!(seq, back);
    }
}
