//! Claim severity classes and binary modelling targets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Loss ratio below which a claim is weak.
pub const WEAK_UPPER: f64 = 0.05;
/// Loss ratio above which a claim is strong.
pub const MEDIUM_UPPER: f64 = 0.20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("claim for {device}: insured sum must be positive, got {ins_sum}")]
    NonPositiveInsSum { device: String, ins_sum: f64 },
    #[error("claim for {device}: loss size must be non-negative, got {loss_size}")]
    NegativeLoss { device: String, loss_size: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRecord {
    pub device_id: String,
    pub loss_size: f64,
    pub ins_sum: f64,
    /// Whether the insured driver caused the accident.
    pub culprit: bool,
}

impl ClaimRecord {
    pub fn validate(&self) -> Result<(), LabelError> {
        if self.ins_sum.is_nan() || self.ins_sum <= 0.0 {
            return Err(LabelError::NonPositiveInsSum {
                device: self.device_id.clone(),
                ins_sum: self.ins_sum,
            });
        }
        if self.loss_size.is_nan() || self.loss_size < 0.0 {
            return Err(LabelError::NegativeLoss {
                device: self.device_id.clone(),
                loss_size: self.loss_size,
            });
        }
        Ok(())
    }

    pub fn loss_ratio(&self) -> f64 {
        self.loss_size / self.ins_sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    None,
    Weak,
    Medium,
    Strong,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::None => "none",
            Severity::Weak => "weak",
            Severity::Medium => "medium",
            Severity::Strong => "strong",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Severity::None),
            "weak" => Ok(Severity::Weak),
            "medium" => Ok(Severity::Medium),
            "strong" => Ok(Severity::Strong),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

/// Severity of a loss ratio. Both boundaries belong to the medium class.
pub fn severity_of_ratio(r: f64) -> Severity {
    if r <= 0.0 {
        Severity::None
    } else if r < WEAK_UPPER {
        Severity::Weak
    } else if r <= MEDIUM_UPPER {
        Severity::Medium
    } else {
        Severity::Strong
    }
}

/// Classifies one claim. Zero-loss and non-culprit claims are `None`.
pub fn classify_severity(claim: &ClaimRecord) -> Result<Severity, LabelError> {
    claim.validate()?;
    if !claim.culprit {
        return Ok(Severity::None);
    }
    Ok(severity_of_ratio(claim.loss_ratio()))
}

/// Binary modelling target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Any,
    Weak,
    Medium,
    Strong,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Any, Target::Weak, Target::Medium, Target::Strong];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Any => "any",
            Target::Weak => "weak",
            Target::Medium => "medium",
            Target::Strong => "strong",
        }
    }

    pub fn matches(self, severity: Severity) -> bool {
        match self {
            Target::Any => severity != Severity::None,
            Target::Weak => severity == Severity::Weak,
            Target::Medium => severity == Severity::Medium,
            Target::Strong => severity == Severity::Strong,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "any" | "all" => Ok(Target::Any),
            "weak" => Ok(Target::Weak),
            "medium" => Ok(Target::Medium),
            "strong" => Ok(Target::Strong),
            other => Err(format!("unknown target {other:?} (expected any, weak, medium or strong)")),
        }
    }
}

/// Severity classes per device.
pub type DeviceLabels = BTreeMap<String, Vec<Severity>>;

/// Labels every claim and groups the classes by device.
pub fn label_claims(claims: &[ClaimRecord]) -> Result<DeviceLabels, LabelError> {
    let mut out = DeviceLabels::new();
    for claim in claims {
        out.entry(claim.device_id.clone())
            .or_default()
            .push(classify_severity(claim)?);
    }
    Ok(out)
}

/// Binary target for each device in `devices`; devices without claims are 0.
pub fn build_targets(labels: &DeviceLabels, devices: &[String], target: Target) -> Vec<u8> {
    devices
        .iter()
        .map(|d| {
            labels
                .get(d)
                .is_some_and(|classes| classes.iter().any(|&s| target.matches(s))) as u8
        })
        .collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `device,loss_size,ins_sum,culprit` rows. Lines starting with `#`
/// are comments.
pub fn read_claims<R: std::io::Read>(reader: R) -> Result<Vec<ClaimRecord>, LabelError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| LabelError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| LabelError::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (i_dev, i_loss, i_ins, i_cul) = (col("device")?, col("loss_size")?, col("ins_sum")?, col("culprit")?);

    let mut claims = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LabelError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let number = |i: usize, name: &str| {
            field(i).parse::<f64>().map_err(|_| LabelError::Parse {
                line,
                message: format!("`{name}` is not a number: {:?}", field(i)),
            })
        };
        let claim = ClaimRecord {
            device_id: field(i_dev).to_string(),
            loss_size: number(i_loss, "loss_size")?,
            ins_sum: number(i_ins, "ins_sum")?,
            culprit: parse_bool(field(i_cul)).ok_or_else(|| LabelError::Parse {
                line,
                message: format!("`culprit` is not a boolean: {:?}", field(i_cul)),
            })?,
        };
        claim.validate()?;
        claims.push(claim);
    }
    Ok(claims)
}

pub fn write_claims(claims: &[ClaimRecord], provenance: Option<&crate::io::Provenance>) -> crate::Result<Vec<u8>> {
    use crate::io::fmt_f64;
    crate::io::csv_document(provenance, |w| {
        w.write_record(["device", "loss_size", "ins_sum", "culprit"])?;
        for c in claims {
            w.write_record([c.device_id.clone(), fmt_f64(c.loss_size), fmt_f64(c.ins_sum), c.culprit.to_string()])?;
        }
        Ok(())
    })
}

/// One row per claim with its loss ratio and severity class.
pub fn write_labels(claims: &[ClaimRecord], provenance: Option<&crate::io::Provenance>) -> crate::Result<Vec<u8>> {
    use crate::io::fmt_f64;
    let classes = claims.iter().map(classify_severity).collect::<Result<Vec<_>, _>>()?;
    crate::io::csv_document(provenance, |w| {
        w.write_record(["device", "loss_size", "ins_sum", "culprit", "loss_ratio", "severity"])?;
        for (c, s) in claims.iter().zip(classes) {
            w.write_record([
                c.device_id.clone(),
                fmt_f64(c.loss_size),
                fmt_f64(c.ins_sum),
                c.culprit.to_string(),
                fmt_f64(c.loss_ratio()),
                s.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Reads the `device` and `severity` columns of a labels CSV.
pub fn read_labels<R: std::io::Read>(reader: R) -> Result<DeviceLabels, LabelError> {
    let mut rdr = crate::io::csv_reader(reader);
    let parse_err = |line: usize, message: String| LabelError::Parse { line, message };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(DeviceLabels::new());
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (i_dev, i_sev) = (col("device")?, col("severity")?);
    let mut out = DeviceLabels::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let severity = rec.get(i_sev).unwrap_or("").trim().parse().map_err(|e| parse_err(line, e))?;
        out.entry(rec.get(i_dev).unwrap_or("").trim().to_string()).or_default().push(severity);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn claim(loss: f64, ins: f64) -> ClaimRecord {
        ClaimRecord {
            device_id: "d".into(),
            loss_size: loss,
            ins_sum: ins,
            culprit: true,
        }
    }

    #[test]
    fn claims_and_labels_round_trip() {
        let mut claims = vec![claim(10.0, 100.0), claim(0.0, 100.0), claim(1.0, 100.0)];
        claims[2].culprit = false;
        claims[1].device_id = "e".into();
        let back = read_claims(&write_claims(&claims, None).unwrap()[..]).unwrap();
        assert_eq!(back, claims);
        let labels = read_labels(&write_labels(&claims, None).unwrap()[..]).unwrap();
        assert_eq!(labels, label_claims(&claims).unwrap());
        assert_eq!(labels["d"], vec![Severity::Medium, Severity::None]);
        assert!(read_claims(&b""[..]).unwrap().is_empty());
        assert!(read_labels(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn severity_examples() {
        let c = |loss| classify_severity(&claim(loss, 1_000_000.0)).unwrap();
        assert_eq!(c(0.0), Severity::None);
        assert_eq!(c(40_000.0), Severity::Weak);
        assert_eq!(c(100_000.0), Severity::Medium);
        assert_eq!(c(250_000.0), Severity::Strong);
        assert_eq!(c(50_000.0), Severity::Medium);
        assert_eq!(c(200_000.0), Severity::Medium);
    }

    #[test]
    fn non_culprit_and_invalid_claims() {
        let mut c = claim(500_000.0, 1_000_000.0);
        c.culprit = false;
        assert_eq!(classify_severity(&c).unwrap(), Severity::None);
        assert!(matches!(
            classify_severity(&claim(1.0, 0.0)),
            Err(LabelError::NonPositiveInsSum { .. })
        ));
        assert!(matches!(
            classify_severity(&claim(-1.0, 10.0)),
            Err(LabelError::NegativeLoss { .. })
        ));
    }

    #[test]
    fn targets() {
        let claims = vec![
            ClaimRecord { device_id: "a".into(), ..claim(40_000.0, 1e6) },
            ClaimRecord { device_id: "b".into(), ..claim(40_000.0, 1e6) },
            ClaimRecord { device_id: "b".into(), ..claim(400_000.0, 1e6) },
            ClaimRecord { device_id: "c".into(), ..claim(0.0, 1e6) },
        ];
        let labels = label_claims(&claims).unwrap();
        let devices: Vec<String> = ["a", "b", "c", "none"].iter().map(|s| s.to_string()).collect();
        assert_eq!(build_targets(&labels, &devices, Target::Any), vec![1, 1, 0, 0]);
        assert_eq!(build_targets(&labels, &devices, Target::Weak), vec![1, 1, 0, 0]);
        assert_eq!(build_targets(&labels, &devices, Target::Medium), vec![0, 0, 0, 0]);
        assert_eq!(build_targets(&labels, &devices, Target::Strong), vec![0, 1, 0, 0]);
    }

    #[test]
    fn claims_csv() {
        let text = "# comment\ndevice,loss_size,ins_sum,culprit\nd1,100,1000,true\nd2,0,500,0\n";
        let claims = read_claims(text.as_bytes()).unwrap();
        assert_eq!(claims.len(), 2);
        assert!(claims[0].culprit && !claims[1].culprit);
        let bad = "device,loss_size,ins_sum,culprit\nd1,abc,1000,true\n";
        assert!(matches!(read_claims(bad.as_bytes()), Err(LabelError::Parse { .. })));
        let missing = "device,loss,ins_sum,culprit\n";
        assert!(read_claims(missing.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_loss(ins in 1.0f64..1e7, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = classify_severity(&claim(lo * ins, ins)).unwrap();
            let s_hi = classify_severity(&claim(hi * ins, ins)).unwrap();
            prop_assert!(s_lo <= s_hi);
        }

        #[test]
        fn any_is_union(classes in prop::collection::vec(0u8..4, 0..6)) {
            let sev = [Severity::None, Severity::Weak, Severity::Medium, Severity::Strong];
            let mut labels = DeviceLabels::new();
            labels.insert("d".into(), classes.iter().map(|&c| sev[c as usize]).collect());
            let devs = vec!["d".to_string()];
            let t = |target| build_targets(&labels, &devs, target)[0];
            prop_assert_eq!(t(Target::Any), t(Target::Weak) | t(Target::Medium) | t(Target::Strong));
        }
    }
}
