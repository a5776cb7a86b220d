//! Comparison policies sharing the simulator's MAC.
//!
//! `Threshold` and `WidestCommon` are proxies for DBS and WiderCast: they
//! keep the decision shape of the originals (a link-quality threshold, a
//! group-minimum width) and nothing more.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Standard dynamic bandwidth access: contend on the primary 20 MHz
    /// channel and widen as far as the secondary blocks allow.
    General,
    /// One SNR threshold per level above 1, strictly increasing.
    Threshold { thresholds: Vec<f64> },
    /// The widest level every station of the BSS can decode.
    WidestCommon,
    Static { level: u8 },
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::General => "general".into(),
            PolicySpec::Threshold { thresholds } if thresholds.as_slice() == [30.0, 38.0, 45.0] => {
                "threshold-proxy".into()
            }
            PolicySpec::Threshold { thresholds } => {
                let t: Vec<String> = thresholds.iter().map(|t| t.to_string()).collect();
                format!("threshold-proxy-{}", t.join("-"))
            }
            PolicySpec::WidestCommon => "widest-common-proxy".into(),
            PolicySpec::Static { level } => format!("static-{level}"),
        }
    }

    /// Problems with the spec for a network with maximum level `u`.
    pub fn issues(&self, u: u8) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            PolicySpec::Threshold { thresholds } => {
                if thresholds.len() != u.saturating_sub(1) as usize {
                    out.push(format!(
                        "expected {} thresholds for u = {u}, got {}",
                        u.saturating_sub(1),
                        thresholds.len()
                    ));
                }
                if thresholds.iter().any(|t| !t.is_finite()) {
                    out.push("thresholds must be finite".into());
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    out.push("thresholds must be strictly increasing".into());
                }
            }
            PolicySpec::Static { level } if *level == 0 || *level > u => {
                out.push(format!("level {level} outside 1..={u}"));
            }
            _ => {}
        }
        out
    }
}

/// General always asks for the widest level; the acquisition procedure
/// decides how much of it is actually free.
pub fn general_decide(u: u8) -> u8 {
    u
}

/// `1 + #{thresholds <= snr}`, capped at `u`.
pub fn threshold_decide(snr: f64, thresholds: &[f64], u: u8) -> u8 {
    let passed = thresholds.iter().filter(|&&t| t <= snr).count();
    (1 + passed).min(u as usize) as u8
}

/// Minimum over the group's supportable levels.
pub fn widest_common_decide(capabilities: &[u8]) -> Result<u8, SimError> {
    capabilities.iter().copied().min().ok_or(SimError::EmptyGroup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_labels_name_their_cutoffs() {
        let label = |t: &[f64]| PolicySpec::Threshold { thresholds: t.to_vec() }.label();
        assert_eq!(label(&[30.0, 38.0, 45.0]), "threshold-proxy");
        assert_eq!(label(&[26.0, 34.5, 41.0]), "threshold-proxy-26-34.5-41");
    }

    #[test]
    fn general_is_max() {
        assert_eq!(general_decide(4), 4);
        assert_eq!(general_decide(1), 1);
    }

    #[test]
    fn thresholds() {
        let t = [30.0, 38.0, 45.0];
        assert_eq!(threshold_decide(25.0, &t, 4), 1);
        assert_eq!(threshold_decide(40.0, &t, 4), 3);
        assert_eq!(threshold_decide(60.0, &t, 4), 4);
        assert_eq!(threshold_decide(30.0, &t, 4), 2);
        assert_eq!(threshold_decide(60.0, &t, 2), 2);
    }

    #[test]
    fn widest_common() {
        assert_eq!(widest_common_decide(&[4, 4, 4]).unwrap(), 4);
        assert_eq!(widest_common_decide(&[4, 2, 3]).unwrap(), 2);
        assert_eq!(widest_common_decide(&[1]).unwrap(), 1);
        assert_eq!(widest_common_decide(&[]), Err(SimError::EmptyGroup));
    }

    #[test]
    fn spec_issues() {
        let ok = PolicySpec::Threshold {
            thresholds: vec![30.0, 38.0, 45.0],
        };
        assert!(ok.issues(4).is_empty());
        let unsorted = PolicySpec::Threshold {
            thresholds: vec![30.0, 30.0, 45.0],
        };
        assert_eq!(unsorted.issues(4).len(), 1);
        assert_eq!(ok.issues(3).len(), 1);
        assert_eq!(PolicySpec::Static { level: 5 }.issues(4).len(), 1);
    }

    #[test]
    fn serde_shape() {
        let spec: PolicySpec = toml::from_str("kind = \"static\"\nlevel = 3").unwrap();
        assert_eq!(spec, PolicySpec::Static { level: 3 });
    }
}
