//! JSON report envelope and serialization of result objects.
//!
//! Every command emits a document with the fixed schema tag
//! `reach-sampler/1`, the echoed command line, a digest of the inputs, the
//! integrator settings and the seed, so a run can be reproduced and
//! compared byte-for-byte after stripping the wall-time field.

use reach_core::regularity::{Decision, RegularityVerdict, VerdictKind};
use reach_core::synthesis::{
    FailureReason, IterationRecord, SynthesisReport, ThresholdEstimate, Verdict,
};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "reach-sampler/1";

pub struct Envelope {
    pub command: String,
    pub inputs_digest: String,
    pub steps_per_unit: usize,
    pub seed: u64,
    pub wall_ms: u128,
    pub results: Value,
}

impl Envelope {
    pub fn to_json(&self) -> Value {
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "integrator": {"method": "rk4", "steps_per_unit": self.steps_per_unit},
            "seed": self.seed,
            "wall_time_ms": self.wall_ms,
            "results": self.results,
        })
    }

    pub fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("serialize");
        text.push('\n');
        text
    }
}

/// Hex SHA-256 of the raw input documents, in argument order.
pub fn digest_inputs<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn verdict_kind_str(kind: VerdictKind) -> &'static str {
    match kind {
        VerdictKind::StronglyRegular => "strongly-regular",
        VerdictKind::StronglyURegular => "strongly-U-regular",
        VerdictKind::WeaklyURegular => "weakly-U-regular",
    }
}

pub fn verdict_to_json(v: &RegularityVerdict) -> Value {
    let mut m = Map::new();
    m.insert("kind".into(), json!(verdict_kind_str(v.kind)));
    m.insert(
        "verdict".into(),
        json!(match v.decision {
            Decision::Regular => "regular",
            Decision::NotDetected => "not-detected",
        }),
    );
    m.insert("margin".into(), json!(v.margin));
    if let Some(fits) = &v.fits {
        let fits_json: Vec<Value> = fits
            .iter()
            .map(|f| {
                json!({
                    "target": f.target.as_slice(),
                    "residual": f.residual,
                    "weights": f.weights.as_slice(),
                })
            })
            .collect();
        m.insert("certificates".into(), Value::Array(fits_json));
    }
    Value::Object(m)
}

pub fn failure_str(reason: FailureReason) -> &'static str {
    match reason {
        FailureReason::NoSpanningCertificate => "no-spanning-certificate",
        FailureReason::MaxIterations => "max-iterations",
        FailureReason::AmplitudeBoxExceeded => "amplitude-box-exceeded",
        FailureReason::InfeasibleValues => "infeasible-values",
        FailureReason::InnerSolverFailure => "inner-solver-failure",
    }
}

pub fn synthesis_to_json(r: &SynthesisReport) -> Value {
    let control = r.control.as_ref().map(|c| match c {
        reach_core::ControlSignal::PiecewiseConstant { partition, values } => json!({
            "pc": {
                "times": partition.times(),
                "values": values.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
            }
        }),
        _ => json!("non-piecewise-constant"),
    });
    json!({
        "method": match r.method {
            reach_core::synthesis::Method::Conic => "conic",
            reach_core::synthesis::Method::NeedleFixedPoint => "needle-fixed-point",
        },
        "partition": {"times": r.partition.times(), "norm": r.partition.norm()},
        "verdict": match r.verdict {
            Verdict::Success => json!("success"),
            Verdict::Failure(reason) => json!({"failure": failure_str(reason)}),
        },
        "residual": r.residual,
        "iterations": r.iterations.len(),
        "control": control,
    })
}

pub fn threshold_to_json(t: &ThresholdEstimate) -> Value {
    json!({
        "method": match t.method {
            reach_core::synthesis::Method::Conic => "conic",
            reach_core::synthesis::Method::NeedleFixedPoint => "needle-fixed-point",
        },
        "outcomes": t.outcomes.iter().map(|(n, r)| json!({
            "n": n,
            "norm": r.partition.norm(),
            "verdict": match r.verdict {
                Verdict::Success => json!("success"),
                Verdict::Failure(reason) => json!({"failure": failure_str(reason)}),
            },
            "residual": r.residual,
        })).collect::<Vec<_>>(),
        "delta_hat": t.delta_hat,
    })
}

/// CSV rows for an iteration trace: `iter,residual,alpha_norm[,z...]`.
pub fn trace_to_csv(trace: &[IterationRecord]) -> String {
    let z_dim = trace
        .iter()
        .filter_map(|r| r.z.as_ref().map(Vec::len))
        .max();
    let mut out = String::from("iter,residual,alpha_norm");
    if let Some(d) = z_dim {
        for i in 0..d {
            out.push_str(&format!(",z{i}"));
        }
    }
    out.push('\n');
    for rec in trace {
        out.push_str(&format!(
            "{},{:e},{:e}",
            rec.iter, rec.residual, rec.alpha_norm
        ));
        if let Some(d) = z_dim {
            match &rec.z {
                Some(z) => {
                    for v in z {
                        out.push_str(&format!(",{v:e}"));
                    }
                }
                None => out.push_str(&",".repeat(d)),
            }
        }
        out.push('\n');
    }
    out
}
