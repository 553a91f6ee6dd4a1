use std::io::Write;

use super::state::NormState;

/// Writes `class,channel,mu,var` rows. Class-agnostic states write their
/// running statistics under class `all`.
pub fn write_stats_csv<W: Write>(mut out: W, state: &NormState) -> std::io::Result<()> {
    writeln!(out, "class,channel,mu,var")?;
    match state.class_stats() {
        Some(cs) => {
            for k in 0..cs.classes() {
                for (ch, (m, v)) in cs.mu(k).iter().zip(cs.var(k)).enumerate() {
                    writeln!(out, "{k},{ch},{m:e},{v:e}")?;
                }
            }
        }
        None => {
            let s = state.active_stats();
            for (ch, (m, v)) in s.mean.iter().zip(&s.var).enumerate() {
                writeln!(out, "all,{ch},{m:e},{v:e}")?;
            }
        }
    }
    Ok(())
}
