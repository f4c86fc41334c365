use super::emission::{argmax_first, EmissionModel};
use super::observation::ObservationSequence;
use super::params::HhmmParams;
use crate::error::{Error, Result};

/// Fills every missing cell of `seq` using the state posteriors `gamma`.
///
/// Continuous cells take the γ-weighted average of the per-state conditional
/// means `μ_miss + Σ_mo Σ_oo⁻¹ (x_obs − μ_obs)`, which reduces to the state
/// means when the whole continuous row is missing. Discrete cells take the
/// most likely symbol of the most probable state. The returned sequence is
/// fully observed; observed cells are copied unchanged.
pub fn impute(params: &HhmmParams, seq: &ObservationSequence, gamma: &[Vec<f64>]) -> Result<ObservationSequence> {
    if gamma.len() != seq.len() || gamma.iter().any(|g| g.len() != params.n_states()) {
        return Err(Error::invalid("posterior table does not match the sequence"));
    }
    let model = EmissionModel::new(params, [seq])?;
    let mc = seq.n_continuous();
    let md = seq.n_discrete();
    let mut out = seq.clone();
    for t in 0..seq.len() {
        let pattern = seq.observed_pattern(t);
        let mask = seq.continuous_mask(t);
        if mask.iter().any(|&o| !o) {
            let row = seq.continuous_row(t);
            let mut filled = vec![0.0; mc];
            for (i, &g) in gamma[t].iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let x = model.factor(pattern, i).complete_row(row, &params.means[i]);
                filled.iter_mut().zip(&x).for_each(|(f, v)| *f += g * v);
            }
            let mass: f64 = gamma[t].iter().sum();
            for m in 0..mc {
                if !mask[m] {
                    let v = filled[m] / mass;
                    if !v.is_finite() {
                        return Err(Error::numerical(None, format!("imputed value at slot {t} is not finite")));
                    }
                    out.set_continuous(t, m, Some(v))?;
                }
            }
        }
        let dmask = seq.discrete_mask(t);
        if dmask.iter().any(|&o| !o) {
            let best = argmax_first(&gamma[t]);
            for m in 0..md {
                if !dmask[m] {
                    out.set_discrete(t, m, Some(model.ml_symbol(m, best) as u8));
                }
            }
        }
    }
    Ok(out)
}
