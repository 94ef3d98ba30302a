//! Labelled datasets with per-sample fault ground truth, and their CSV form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::faults::{self, FaultId, ONSET};
use super::numex::{NumexParams, NumexState, StepNoise};
use super::tts::{self, Excitation, TtsParams, TtsState};
use super::System;
use crate::artifact;
use crate::error::{Error, Result};
use crate::seeds::substream;

/// Which set to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Normal operation only.
    Train,
    /// `ONSET` normal samples followed by the faulty stretch.
    Test(FaultId),
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Train => f.write_str("train"),
            Scenario::Test(id) => write!(f, "test-{}", id.short()),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// `train`, `test-F09`; a leading `numex-` or `tts-` is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t
            .strip_prefix("numex-")
            .or_else(|| t.strip_prefix("tts-"))
            .unwrap_or(&t);
        if t == "train" {
            return Ok(Scenario::Train);
        }
        match t.strip_prefix("test-") {
            Some(id) => Ok(Scenario::Test(id.parse()?)),
            None => Err(Error::Config(format!("unknown scenario '{s}' (expected train or test-FNN)"))),
        }
    }
}

impl Scenario {
    /// Every test scenario of a system, in catalog order.
    pub fn tests(system: System) -> Vec<Scenario> {
        faults::catalog(system).iter().map(|p| Scenario::Test(p.id)).collect()
    }

    /// File stem, e.g. `numex-test-F09`.
    pub fn file_stem(self, system: System) -> String {
        format!("{system}-{self}")
    }
}

/// Sample counts and simulator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n_train: usize,
    /// Faulty samples after the `ONSET` normal ones.
    pub n_test_faulty: usize,
    #[serde(default)]
    pub numex: NumexParams,
    #[serde(default)]
    pub tts: TtsParams,
}

impl SimSettings {
    pub fn defaults(system: System) -> Self {
        let (n_train, n_test_faulty) = match system {
            System::Numex => (15_000, 800),
            System::Tts => (16_000, 1_800),
        };
        Self {
            n_train,
            n_test_faulty,
            numex: NumexParams::default(),
            tts: TtsParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test_faulty == 0 {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        self.tts.validate()
    }

    pub fn rows(&self, scenario: Scenario) -> usize {
        match scenario {
            Scenario::Train => self.n_train,
            Scenario::Test(_) => ONSET + self.n_test_faulty,
        }
    }
}

/// What a dataset is and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: System,
    pub scenario: String,
    pub seed: u64,
    /// First faulty index, for test sets.
    pub onset: Option<usize>,
    pub fault_id: Option<FaultId>,
    pub description: Option<String>,
    /// Ground truth is an additive observation-space signal.
    pub estimable: bool,
    pub rows: usize,
    pub dim: usize,
    /// Share of faulty-run steps where a level hit a clamp bound.
    pub clamp_fraction: f64,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub z: Array2<f64>,
    /// `true` for faulty samples.
    pub labels: Vec<bool>,
    /// Additive fault in observation space; zero where none is defined.
    pub truth: Array2<f64>,
    pub meta: DatasetMeta,
}

/// Clamp saturation above this share of a run is reported.
const CLAMP_WARN: f64 = 0.5;

/// Simulate one scenario. `(system, scenario, seed, settings)` fix the result bit for bit.
pub fn generate(system: System, scenario: Scenario, seed: u64, settings: &SimSettings) -> Result<Dataset> {
    settings.validate()?;
    let n = settings.rows(scenario);
    let m = system.dim();
    let mut rng = substream(seed, &format!("sim/{}", scenario.file_stem(system)));
    let mut z = Array2::zeros((n, m));
    let mut truth = Array2::zeros((n, m));
    let fault = match scenario {
        Scenario::Train => None,
        Scenario::Test(id) => Some(faults::profile(system, id)?),
    };
    let estimable = fault.is_some_and(|p| p.estimable);
    let mut clamped_steps = 0usize;

    match system {
        System::Numex => {
            let p = &settings.numex;
            let mut normal = NumexState::new(p);
            let healthy = Default::default();
            for k in 0..p.burn_in {
                normal.step(p, &StepNoise::draw(&mut rng), &healthy, k)?;
            }
            let mut faulty = normal;
            for k in 0..n {
                let noise = StepNoise::draw(&mut rng);
                let zn = normal.step(p, &noise, &healthy, k)?;
                let row = match fault {
                    None => zn,
                    Some(f) => {
                        let e = faults::numex_effect(f.id, k)?;
                        let mut zf = faulty.step(p, &noise, &e.latent, k)?;
                        for (v, a) in zf.iter_mut().zip(e.additive) {
                            *v += a;
                        }
                        if estimable {
                            for j in 0..m {
                                truth[[k, j]] = zf[j] - zn[j];
                            }
                        }
                        zf
                    }
                };
                z.row_mut(k).assign(&ndarray::aview1(&row));
            }
        }
        System::Tts => {
            let p = &settings.tts;
            let none = tts::ComponentFaults::default();
            let mut normal = TtsState::new(p);
            let mut exc = Excitation::new(p);
            for k in 0..p.burn_in {
                exc.advance(p, tts::draw_increments(&mut rng, p));
                normal.step(p, exc.q, &none, [0.0; 3], k)?;
            }
            let mut faulty = normal;
            for k in 0..n {
                exc.advance(p, tts::draw_increments(&mut rng, p));
                let on = normal.step(p, exc.q, &none, [0.0; 3], k)?;
                let row = match fault {
                    None => {
                        clamped_steps += on.clamped as usize;
                        on.z
                    }
                    Some(f) => {
                        let e = faults::tts_effect(f.id, k)?;
                        let q = [exc.q[0] + e.actuator[0], exc.q[1] + e.actuator[1]];
                        let of = faulty.step(p, q, &e.component, e.sensor, k)?;
                        clamped_steps += of.clamped as usize;
                        if estimable {
                            for j in 0..m {
                                truth[[k, j]] = of.z[j] - on.z[j];
                            }
                        }
                        of.z
                    }
                };
                z.row_mut(k).assign(&ndarray::aview1(&row));
            }
        }
    }

    let clamp_fraction = clamped_steps as f64 / n as f64;
    if clamp_fraction > CLAMP_WARN {
        log::warn!(
            "{}: levels saturated on {:.0}% of steps; data quality is poor",
            scenario.file_stem(system),
            100.0 * clamp_fraction
        );
    }
    let labels = (0..n).map(|k| fault.is_some() && k >= ONSET).collect();
    Ok(Dataset {
        z,
        labels,
        truth,
        meta: DatasetMeta {
            system,
            scenario: scenario.to_string(),
            seed,
            onset: fault.map(|_| ONSET),
            fault_id: fault.map(|f| f.id),
            description: fault.map(|f| f.description.to_string()),
            estimable,
            rows: n,
            dim: m,
            clamp_fraction,
            config_hash: None,
        },
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    fn header(m: usize) -> Vec<String> {
        let mut h = vec!["k".to_string()];
        h.extend((1..=m).map(|j| format!("z_{j}")));
        h.push("label".into());
        h.extend((1..=m).map(|j| format!("f_{j}")));
        h.push("fault_id".into());
        h
    }

    /// CSV body: `k, z_1..z_m, label, f_1..f_m, fault_id`.
    ///
    /// Floats use the shortest representation that parses back to the same bits.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let m = self.dim();
        let tag = self.meta.fault_id.map(|f| f.to_string());
        let rows = (0..self.len()).map(|k| {
            let mut r = Vec::with_capacity(2 * m + 3);
            r.push(k.to_string());
            r.extend(self.z.row(k).iter().map(|v| v.to_string()));
            r.push(u8::from(self.labels[k]).to_string());
            r.extend(self.truth.row(k).iter().map(|v| v.to_string()));
            r.push(match (&tag, self.labels[k]) {
                (Some(t), true) => t.clone(),
                _ => "normal".into(),
            });
            r
        });
        artifact::csv_bytes(&Self::header(m), rows)
    }

    /// Parse a CSV body; `meta` comes from the sidecar.
    pub fn from_csv_bytes(bytes: &[u8], meta: DatasetMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 5 || !(header.len() - 3).is_multiple_of(2) {
            return Err(Error::Data(format!("dataset header has {} columns", header.len())));
        }
        let m = (header.len() - 3) / 2;
        if header != Self::header(m) {
            return Err(Error::Data(format!("unexpected dataset header {header:?}")));
        }
        let mut zs = Vec::new();
        let mut fs = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {}: column '{}' is not a number: '{}'", line + 1, header[i], &rec[i])))
            };
            if rec[0].parse::<usize>().ok() != Some(line) {
                return Err(Error::Data(format!("row {}: index '{}' out of sequence", line + 1, &rec[0])));
            }
            for i in 1..=m {
                zs.push(num(i)?);
            }
            labels.push(match &rec[m + 1] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Data(format!("row {}: label '{other}' is not 0 or 1", line + 1))),
            });
            for i in m + 2..2 * m + 2 {
                fs.push(num(i)?);
            }
        }
        let n = labels.len();
        if n != meta.rows || m != meta.dim {
            return Err(Error::Data(format!(
                "dataset is {n}x{m} but its metadata says {}x{}",
                meta.rows, meta.dim
            )));
        }
        let z = Array2::from_shape_vec((n, m), zs).expect("row lengths checked");
        let truth = Array2::from_shape_vec((n, m), fs).expect("row lengths checked");
        Ok(Self { z, labels, truth, meta })
    }

    /// Atomically write the CSV and its `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write_with_sidecar(path, &self.to_csv_bytes()?, &self.meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: DatasetMeta = artifact::read_json(&artifact::sidecar_path(path))?;
        Self::from_csv_bytes(&artifact::read(path)?, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Axis};

    fn small(system: System) -> SimSettings {
        SimSettings {
            n_train: 3000,
            n_test_faulty: 800,
            ..SimSettings::defaults(system)
        }
    }

    #[test]
    fn scenario_names() {
        assert_eq!("numex-test-F09".parse::<Scenario>().unwrap(), Scenario::Test(FaultId::new(9).unwrap()));
        assert_eq!("train".parse::<Scenario>().unwrap(), Scenario::Train);
        assert!("valid".parse::<Scenario>().is_err());
        assert_eq!(Scenario::Test(FaultId::new(2).unwrap()).file_stem(System::Tts), "tts-test-F02");
        assert_eq!(Scenario::tests(System::Numex).len(), 10);
    }

    #[test]
    fn default_sizes() {
        let n = SimSettings::defaults(System::Numex);
        assert_eq!((n.rows(Scenario::Train), n.rows(Scenario::Test(FaultId::new(1).unwrap()))), (15_000, 1_000));
        let t = SimSettings::defaults(System::Tts);
        assert_eq!((t.rows(Scenario::Train), t.rows(Scenario::Test(FaultId::new(1).unwrap()))), (16_000, 2_000));
    }

    #[test]
    fn training_set_is_normal_and_deterministic() {
        let a = generate(System::Numex, Scenario::Train, 5, &small(System::Numex)).unwrap();
        let b = generate(System::Numex, Scenario::Train, 5, &small(System::Numex)).unwrap();
        assert_eq!(a.z.dim(), (3000, 5));
        assert!(a.labels.iter().all(|l| !l));
        assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
        let c = generate(System::Numex, Scenario::Train, 6, &small(System::Numex)).unwrap();
        assert_ne!(a.z, c.z);
    }

    #[test]
    fn numex_is_stationary() {
        let d = generate(System::Numex, Scenario::Train, 11, &SimSettings::defaults(System::Numex)).unwrap();
        let half = d.len() / 2;
        let s1 = d.z.slice(s![..half, ..]).std_axis(Axis(0), 1.0);
        let s2 = d.z.slice(s![half.., ..]).std_axis(Axis(0), 1.0);
        for j in 0..5 {
            let r = s1[j] / s2[j];
            assert!((0.8..=1.25).contains(&r), "column {j}: ratio {r}");
        }
    }

    #[test]
    fn labels_flip_at_onset() {
        let id = FaultId::new(9).unwrap();
        let d = generate(System::Numex, Scenario::Test(id), 2, &small(System::Numex)).unwrap();
        assert_eq!(d.len(), 1000);
        assert!(d.labels[..200].iter().all(|l| !l));
        assert!(d.labels[200..].iter().all(|&l| l));
        assert_eq!(d.meta.onset, Some(200));
    }

    #[test]
    fn additive_ground_truth_matches_twin_difference() {
        // the normal prefix of a test set is the fault-free twin until onset
        for system in [System::Numex, System::Tts] {
            let settings = small(system);
            for p in faults::catalog(system) {
                let d = generate(system, Scenario::Test(p.id), 4, &settings).unwrap();
                assert!(d.truth.slice(s![..200, ..]).iter().all(|v| *v == 0.0));
                if p.estimable {
                    assert!(d.truth.slice(s![200.., ..]).iter().any(|v| *v != 0.0), "{system} {}", p.id);
                } else {
                    assert!(d.truth.iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn sensor_truth_is_the_catalog_signal() {
        let id = FaultId::new(5).unwrap();
        let d = generate(System::Numex, Scenario::Test(id), 8, &small(System::Numex)).unwrap();
        assert!((d.truth[[399, 0]] - 0.36).abs() < 1e-12);
        let id = FaultId::new(3).unwrap();
        let d = generate(System::Tts, Scenario::Test(id), 8, &small(System::Tts)).unwrap();
        assert!((d.truth[[900, 2]] + 3.5).abs() < 1e-9);
        assert!(d.truth.column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pump_fault_moves_recorded_flow_and_levels() {
        let id = FaultId::new(2).unwrap();
        let d = generate(System::Tts, Scenario::Test(id), 1, &small(System::Tts)).unwrap();
        assert!((d.truth[[500, 0]] + 20.0).abs() < 1e-9);
        assert!(d.truth[[900, 2]] < -0.1, "tank 1 should drop: {}", d.truth[[900, 2]]);
    }

    #[test]
    fn tts_levels_stay_physical() {
        for n in 1..=8 {
            let d = generate(System::Tts, Scenario::Test(FaultId::new(n).unwrap()), 3, &small(System::Tts)).unwrap();
            // sensor faults bend the recorded level; check the twin-corrected one
            let levels = &d.z.slice(s![.., 2..]) - &d.truth.slice(s![.., 2..]);
            assert!(levels.iter().all(|h| *h >= -1e-9 && *h <= 62.0 + 1e-9));
        }
        let d = generate(System::Tts, Scenario::Train, 3, &small(System::Tts)).unwrap();
        assert_eq!(d.meta.clamp_fraction, 0.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let id = FaultId::new(7).unwrap();
        let d = generate(System::Numex, Scenario::Test(id), 3, &small(System::Numex)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        d.save(&p).unwrap();
        let back = Dataset::load(&p).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn corrupt_csv_is_a_data_error() {
        let d = generate(System::Numex, Scenario::Train, 3, &small(System::Numex)).unwrap();
        let text = String::from_utf8(d.to_csv_bytes().unwrap()).unwrap();
        let broken = text.replacen("\n1,", "\n1,abc", 1);
        assert!(matches!(Dataset::from_csv_bytes(broken.as_bytes(), d.meta.clone()), Err(Error::Data(_))));
        let short: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(matches!(Dataset::from_csv_bytes(short.as_bytes(), d.meta.clone()), Err(Error::Data(_))));
    }
}
