//! File formats: dataset JSON and its CSV mirror, witness allocations and
//! Afriat certificates.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so `read(write(d)) == d` for every finite dataset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::afriat::AfriatCertificate;
use crate::dataset::{Dataset, DatasetError, Observation, PersonalizedAllocation, Probe};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    version: String,
    #[serde(rename = "N")]
    goods: usize,
    #[serde(rename = "M")]
    agents: usize,
    #[serde(rename = "T")]
    steps: usize,
    observations: Vec<ObservationFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationFile {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_hat: Vec<Vec<f64>>,
}

fn parse_error(e: serde_json::Error) -> DatasetError {
    DatasetError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

fn check_version(found: &str) -> Result<(), DatasetError> {
    if found != SCHEMA_VERSION {
        return Err(DatasetError::SchemaVersion {
            found: found.to_string(),
            expected: SCHEMA_VERSION.to_string(),
        });
    }
    Ok(())
}

fn ensure_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<(), DatasetError> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::NonFinite(what.to_string()));
    }
    Ok(())
}

pub fn dataset_to_json(dataset: &Dataset) -> Result<String, DatasetError> {
    for obs in dataset.observations() {
        ensure_finite("alpha", obs.probe.as_slice())?;
        ensure_finite("beta", &obs.aggregate)?;
        ensure_finite("beta_hat", obs.assignable.iter().flatten())?;
    }
    let file = DatasetFile {
        version: SCHEMA_VERSION.to_string(),
        goods: dataset.goods(),
        agents: dataset.agents(),
        steps: dataset.len(),
        observations: dataset
            .observations()
            .iter()
            .map(|o| ObservationFile {
                alpha: o.probe.as_slice().to_vec(),
                beta: o.aggregate.clone(),
                beta_hat: o.assignable.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("dataset serializes");
    s.push('\n');
    Ok(s)
}

pub fn dataset_from_json(text: &str) -> Result<Dataset, DatasetError> {
    let file: DatasetFile = serde_json::from_str(text).map_err(parse_error)?;
    check_version(&file.version)?;
    if file.observations.len() != file.steps {
        return Err(DatasetError::Schema(format!(
            "header declares T={} but {} observations are present",
            file.steps,
            file.observations.len()
        )));
    }
    let mut observations = Vec::with_capacity(file.steps);
    for (t, o) in file.observations.into_iter().enumerate() {
        let n = file.goods;
        let bad_len = |what: &str, found: usize| {
            DatasetError::Schema(format!("observation {}: {what} has {found} entries, header N={n}", t + 1))
        };
        if o.alpha.len() != n {
            return Err(bad_len("alpha", o.alpha.len()));
        }
        if o.beta.len() != n {
            return Err(bad_len("beta", o.beta.len()));
        }
        if o.beta_hat.len() != file.agents {
            return Err(DatasetError::Schema(format!(
                "observation {}: header declares M={} but {} beta_hat blocks are present",
                t + 1,
                file.agents,
                o.beta_hat.len()
            )));
        }
        if let Some(b) = o.beta_hat.iter().find(|b| b.len() != n) {
            return Err(bad_len("beta_hat block", b.len()));
        }
        observations.push(Observation::new(Probe::new(o.alpha), o.beta, o.beta_hat));
    }
    Dataset::new(observations)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    dataset_from_json(&fs::read_to_string(path)?)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    fs::write(path, dataset_to_json(dataset)?)?;
    Ok(())
}

/// CSV mirror: one row per observation, columns `alpha_*`, `beta_*`, then
/// `beta_hat_<agent>_<good>` grouped by agent.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let n = dataset.goods();
    let mut header: Vec<String> = Vec::new();
    header.extend((1..=n).map(|k| format!("alpha_{k}")));
    header.extend((1..=n).map(|k| format!("beta_{k}")));
    for i in 1..=dataset.agents() {
        header.extend((1..=n).map(|k| format!("beta_hat_{i}_{k}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for obs in dataset.observations() {
        let row: Vec<String> = obs
            .probe
            .as_slice()
            .iter()
            .chain(&obs.aggregate)
            .chain(obs.assignable.iter().flatten())
            .map(|v| v.to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct AllocationFile {
    version: String,
    #[serde(rename = "N")]
    goods: usize,
    #[serde(rename = "M")]
    agents: usize,
    #[serde(rename = "T")]
    steps: usize,
    q: Vec<Vec<Vec<f64>>>,
}

pub fn allocation_to_json(allocation: &PersonalizedAllocation) -> String {
    let q = allocation.as_nested().to_vec();
    let agents = q.first().map_or(0, |r| r.len());
    let goods = q.first().and_then(|r| r.first()).map_or(0, |b| b.len());
    let file = AllocationFile { version: SCHEMA_VERSION.into(), goods, agents, steps: q.len(), q };
    let mut s = serde_json::to_string_pretty(&file).expect("allocation serializes");
    s.push('\n');
    s
}

pub fn allocation_from_json(text: &str) -> Result<PersonalizedAllocation, DatasetError> {
    let file: AllocationFile = serde_json::from_str(text).map_err(parse_error)?;
    check_version(&file.version)?;
    let shape_ok = file.q.len() == file.steps
        && file
            .q
            .iter()
            .all(|row| row.len() == file.agents && row.iter().all(|b| b.len() == file.goods));
    if !shape_ok {
        return Err(DatasetError::Schema("q does not match declared T x M x N".into()));
    }
    Ok(PersonalizedAllocation::new(file.q))
}

#[derive(Debug, Serialize, Deserialize)]
struct CertificateFile {
    /// 1-based agent number.
    agent: usize,
    u: Vec<f64>,
    lambda: Vec<f64>,
}

pub fn certificate_to_json(agent: usize, cert: &AfriatCertificate) -> String {
    let file = CertificateFile { agent: agent + 1, u: cert.u.clone(), lambda: cert.lambda.clone() };
    let mut s = serde_json::to_string_pretty(&file).expect("certificate serializes");
    s.push('\n');
    s
}

/// Returns the 0-based agent index together with the certificate.
pub fn certificate_from_json(text: &str) -> Result<(usize, AfriatCertificate), DatasetError> {
    let file: CertificateFile = serde_json::from_str(text).map_err(parse_error)?;
    if file.agent == 0 {
        return Err(DatasetError::Schema("agent numbers start at 1".into()));
    }
    if file.u.len() != file.lambda.len() {
        return Err(DatasetError::Schema("u and lambda lengths differ".into()));
    }
    Ok((file.agent - 1, AfriatCertificate { u: file.u, lambda: file.lambda }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Dataset {
        Dataset::new(vec![
            Observation::new(Probe::new(vec![0.1 + 0.2, 1.0 / 3.0]), vec![2.0, 1e-300], vec![vec![0.5, 0.0], vec![0.25, 0.0]]),
            Observation::new(Probe::new(vec![1.05, 0.7]), vec![0.0, 0.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
        ])
        .unwrap()
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = dataset_to_json(&sample()).unwrap();
        let cut = &text[..text.len() / 2];
        match dataset_from_json(cut) {
            Err(DatasetError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_agent_block_is_a_schema_error() {
        let text = r#"{"version":"1","N":2,"M":3,"T":1,"observations":[
            {"alpha":[1,1],"beta":[1,1],"beta_hat":[[0,0],[0,0]]}]}"#;
        assert!(matches!(dataset_from_json(text), Err(DatasetError::Schema(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = dataset_to_json(&sample()).unwrap().replacen("\"1\"", "\"2\"", 1);
        assert!(matches!(dataset_from_json(&text), Err(DatasetError::SchemaVersion { .. })));
    }

    #[test]
    fn non_finite_values_cannot_be_written() {
        let d = Dataset::new(vec![Observation::new(Probe::new(vec![f64::NAN]), vec![1.0], vec![vec![0.0]])]).unwrap();
        assert!(matches!(dataset_to_json(&d), Err(DatasetError::NonFinite(_))));
    }

    #[test]
    fn csv_mirror_layout() {
        let csv = dataset_to_csv(&sample());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "alpha_1,alpha_2,beta_1,beta_2,beta_hat_1_1,beta_hat_1_2,beta_hat_2_1,beta_hat_2_2"
        );
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[0], 0.1 + 0.2);
        assert_eq!(first[3], 1e-300);
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn certificate_json_is_one_based() {
        let cert = AfriatCertificate { u: vec![1.0, 2.0], lambda: vec![1.0, 1.5] };
        let text = certificate_to_json(0, &cert);
        assert!(text.contains("\"agent\": 1"));
        let (agent, back) = certificate_from_json(&text).unwrap();
        assert_eq!(agent, 0);
        assert_eq!(back, cert);
    }

    proptest! {
        #[test]
        fn dataset_round_trip_is_identity(
            t in 1usize..5,
            m in 1usize..4,
            n in 1usize..4,
            seed in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 64),
        ) {
            let mut it = seed.iter().cycle().copied();
            let observations = (0..t).map(|_| {
                let alpha = (0..n).map(|_| it.next().unwrap()).collect();
                let beta = (0..n).map(|_| it.next().unwrap()).collect();
                let hat = (0..m).map(|_| (0..n).map(|_| it.next().unwrap()).collect()).collect();
                Observation::new(Probe::new(alpha), beta, hat)
            }).collect();
            let d = Dataset::new(observations).unwrap();
            let back = dataset_from_json(&dataset_to_json(&d).unwrap()).unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn allocation_round_trip_is_identity(values in proptest::collection::vec(0.0f64..10.0, 12)) {
            let q: Vec<Vec<Vec<f64>>> = values.chunks(6).map(|c| c.chunks(2).map(|b| b.to_vec()).collect()).collect();
            let alloc = PersonalizedAllocation::new(q);
            prop_assert_eq!(allocation_from_json(&allocation_to_json(&alloc)).unwrap(), alloc);
        }
    }
}
