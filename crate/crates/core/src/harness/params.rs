//! Versioned JSON files holding trained detector parameters.
//!
//! Floats are written in shortest round-trip decimal form and parsed
//! exactly, so a save/load cycle reproduces every bit.

use serde::{Deserialize, Serialize};

use crate::detector::TpgParams;
use crate::linalg::MatrixMode;
use crate::{Error, Result};

pub const PARAMS_VERSION: &str = "tpg-params/1";

/// Where a parameter set came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsMeta {
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub version: String,
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub t_max: usize,
    pub mode: MatrixMode,
    pub shared_softness: bool,
    pub gamma_raw: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: f64,
}

pub fn save_params(p: &TpgParams, meta: &ParamsMeta) -> Result<String> {
    p.validate()?;
    let file = ParamsFile {
        version: PARAMS_VERSION.to_string(),
        n: meta.n,
        m: meta.m,
        snr_db: meta.snr_db,
        seed: meta.seed,
        t_max: p.t_max,
        mode: p.mode,
        shared_softness: p.shared_softness,
        gamma_raw: p.gamma_raw.clone(),
        theta: p.theta.clone(),
        alpha: p.alpha,
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::MalformedFile(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn load_params(text: &str) -> Result<(TpgParams, ParamsMeta)> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::MalformedFile(format!("line {} column {}: {e}", e.line(), e.column())))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(PARAMS_VERSION) => {}
        Some(other) => return Err(Error::UnknownVersion(other.to_string())),
        None => return Err(Error::MalformedFile("missing `version` string".into())),
    }
    let file: ParamsFile = serde_json::from_value(value).map_err(|e| Error::MalformedFile(e.to_string()))?;
    let params = TpgParams {
        t_max: file.t_max,
        gamma_raw: file.gamma_raw,
        theta: file.theta,
        alpha: file.alpha,
        mode: file.mode,
        shared_softness: file.shared_softness,
    };
    params.validate().map_err(|e| match e {
        Error::InvalidConfig { field, reason } => Error::MalformedFile(format!("{field}: {reason}")),
        other => other,
    })?;
    let meta = ParamsMeta {
        n: file.n,
        m: file.m,
        snr_db: file.snr_db,
        seed: file.seed,
    };
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> ParamsMeta {
        ParamsMeta {
            n: 50,
            m: 32,
            snr_db: 16.0,
            seed: 3,
        }
    }

    #[test]
    fn short_gamma_array() {
        let p = TpgParams::uniform(3, MatrixMode::Lmmse, 0.1, 1.0, 2.0);
        let text = save_params(&p, &meta()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["gamma_raw"] = serde_json::json!([0.1, 0.2]);
        let err = load_params(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { field: "gamma_raw", expected: 3, found: 2 }));
    }

    #[test]
    fn unknown_version() {
        let p = TpgParams::uniform(2, MatrixMode::Pinv, 0.1, 1.0, 0.0);
        let text = save_params(&p, &meta()).unwrap().replace(PARAMS_VERSION, "tpg-params/9");
        assert!(matches!(load_params(&text), Err(Error::UnknownVersion(v)) if v == "tpg-params/9"));
    }

    #[test]
    fn malformed() {
        assert!(matches!(load_params("{ not json"), Err(Error::MalformedFile(_))));
        assert!(matches!(load_params("{\"t_max\": 1}"), Err(Error::MalformedFile(_))));
        let bad_mode = format!("{{\"version\": \"{PARAMS_VERSION}\", \"mode\": \"XYZ\"}}");
        assert!(matches!(load_params(&bad_mode), Err(Error::MalformedFile(_))));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(-0.0),
            Just(f64::MIN_POSITIVE),
            Just(5e-324),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            gamma in prop::collection::vec(finite(), 1..8),
            theta_seed in finite(),
            alpha in finite(),
            shared in any::<bool>(),
        ) {
            let t_max = gamma.len();
            let theta: Vec<f64> = (0..t_max).map(|k| theta_seed / (k as f64 + 1.0)).collect();
            let p = TpgParams {
                t_max,
                gamma_raw: gamma,
                theta,
                alpha,
                mode: MatrixMode::Lmmse,
                shared_softness: shared,
            };
            let text = save_params(&p, &meta()).unwrap();
            let (q, m) = load_params(&text).unwrap();
            prop_assert_eq!(m, meta());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&p.gamma_raw), bits(&q.gamma_raw));
            prop_assert_eq!(bits(&p.theta), bits(&q.theta));
            prop_assert_eq!(p.alpha.to_bits(), q.alpha.to_bits());
            prop_assert_eq!(p.shared_softness, q.shared_softness);
        }
    }
}
