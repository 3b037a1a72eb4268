//! Timing harness comparing password, face, passwordless and triple-layer
//! authentication.
//!
//! All durations are held as integer microseconds and rendered in
//! milliseconds with three decimals, so a sum of rendered values is the
//! rendered sum.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::authenticator::{AuthenticatorDevice, DeviceKind};
use crate::clock::system_clock;
use crate::crypto::Entropy;
use crate::face::{FaceRegistry, ReferencePad, EMBEDDING_DIM};
use crate::rp::{RpConfig, RpServer};

pub const MIN_TRIALS: usize = 5;
pub const WARMUP_TRIALS: usize = 3;
pub const CALIBRATION_TOLERANCE: f64 = 0.15;
pub const PASSWORD_LEN: usize = 49;

/// Reference per-verification times of deep face models, used only in the
/// report footnote.
pub const EXTERNAL_FACE_MODEL_MS: (f64, f64) = (128.0, 1150.0);

const BENCH_RP: &str = "bench.passgate.local";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("benchmark setup failed: {0}")]
    Setup(String),
}

fn setup<E: std::fmt::Display>(e: E) -> BenchError {
    BenchError::Setup(e.to_string())
}

fn micros(d: Duration) -> u64 {
    d.as_micros().try_into().unwrap_or(u64::MAX)
}

pub fn format_ms(us: u64) -> String {
    format!("{}.{:03}", us / 1000, us % 1000)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Password,
    FacialRecognition,
    Passwordless,
    Combined,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Password => "Password Authentication",
            ModelKind::FacialRecognition => "Facial recognition Authentication",
            ModelKind::Passwordless => "Passwordless Authentication",
            ModelKind::Combined => "Triple layer (FIDO + device attestation + facial recognition)",
        }
    }

    pub fn security(self) -> &'static str {
        match self {
            ModelKind::Password => "Low",
            ModelKind::FacialRecognition => "Medium",
            ModelKind::Passwordless => "High",
            ModelKind::Combined => "Extremely high",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TrialTiming {
    pub create_us: u64,
    pub verify_us: u64,
}

impl TrialTiming {
    pub fn total_us(&self) -> u64 {
        self.create_us + self.verify_us
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimingRow {
    pub label: String,
    pub model: ModelKind,
    pub trials: Vec<TrialTiming>,
    pub create_us: u64,
    pub verify_us: u64,
    pub total_us: u64,
}

impl TimingRow {
    /// Means are rounded to the microsecond per column; the total is their sum.
    pub fn from_trials(model: ModelKind, trials: Vec<TrialTiming>) -> Result<Self, BenchError> {
        if trials.is_empty() {
            return Err(BenchError::Validation("a timing row needs at least one trial".into()));
        }
        let n = trials.len() as u64;
        let mean = |f: fn(&TrialTiming) -> u64| (trials.iter().map(f).sum::<u64>() + n / 2) / n;
        let create_us = mean(|t| t.create_us);
        let verify_us = mean(|t| t.verify_us);
        Ok(Self {
            label: model.label().to_owned(),
            model,
            trials,
            create_us,
            verify_us,
            total_us: create_us + verify_us,
        })
    }

    pub fn trial_times_ms(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.total_us() as f64 / 1000.0).collect()
    }

    pub fn create_ms(&self) -> f64 {
        self.create_us as f64 / 1000.0
    }

    pub fn verify_ms(&self) -> f64 {
        self.verify_us as f64 / 1000.0
    }

    pub fn total_ms(&self) -> f64 {
        self.total_us as f64 / 1000.0
    }
}

// ---- password baseline ----

/// Iterated SHA-256: `h0 = H(salt ‖ password)`, `h(i+1) = H(h(i))`.
pub fn iterated_sha256(salt: &[u8], password: &[u8], iterations: u32) -> [u8; 32] {
    let mut h: [u8; 32] = Sha256::new().chain_update(salt).chain_update(password).finalize().into();
    for _ in 1..iterations.max(1) {
        h = Sha256::digest(h).into();
    }
    h
}

#[derive(Clone, Debug)]
pub struct PasswordVerifier {
    salt: [u8; 16],
    iterations: u32,
    digest: [u8; 32],
}

impl PasswordVerifier {
    pub fn new(password: &str, salt: [u8; 16], iterations: u32) -> Self {
        let iterations = iterations.max(1);
        Self {
            salt,
            iterations,
            digest: iterated_sha256(&salt, password.as_bytes(), iterations),
        }
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn verify(&self, candidate: &str) -> bool {
        let h = iterated_sha256(&self.salt, candidate.as_bytes(), self.iterations);
        h.ct_eq(&self.digest).into()
    }
}

/// A fixed password of [`PASSWORD_LEN`] printable characters.
pub fn bench_password() -> String {
    (0..PASSWORD_LEN)
        .map(|i| char::from(b'!' + ((i * 37 + 11) % 94) as u8))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub iterations: u32,
    pub target_ms: f64,
    pub measured_ms: f64,
}

fn time_check(salt: &[u8], iterations: u32) -> Duration {
    let password = bench_password();
    let start = Instant::now();
    std::hint::black_box(iterated_sha256(salt, std::hint::black_box(password.as_bytes()), iterations));
    start.elapsed()
}

fn median_check_ms(salt: &[u8], iterations: u32, samples: usize) -> f64 {
    let mut v: Vec<f64> = (0..samples)
        .map(|_| time_check(salt, iterations).as_secs_f64() * 1000.0)
        .collect();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Finds an iteration count whose single password check takes `target_ms`
/// on this host, within [`CALIBRATION_TOLERANCE`].
pub fn calibrate_password_cost(target_ms: f64) -> Result<Calibration, BenchError> {
    if !(target_ms.is_finite() && target_ms > 0.0) {
        return Err(BenchError::Calibration(format!("target must be positive, got {target_ms}")));
    }
    let salt = [0x5a; 16];
    // Probe until the sample is long enough to swamp timer resolution.
    let mut probe = 1_000u32;
    let per_iter_ms = loop {
        let ms = time_check(&salt, probe).as_secs_f64() * 1000.0;
        if ms >= 20.0 || probe >= 1 << 26 {
            break ms / probe as f64;
        }
        probe = probe.saturating_mul(2);
    };
    let floor_ms = median_check_ms(&salt, 1, 5);
    if floor_ms > target_ms * (1.0 + CALIBRATION_TOLERANCE) {
        return Err(BenchError::Calibration(format!(
            "target {target_ms} ms is below the cost of a single hash ({floor_ms:.4} ms)"
        )));
    }

    let samples = if target_ms < 50.0 { 7 } else if target_ms < 300.0 { 3 } else { 1 };
    let mut iterations = ((target_ms / per_iter_ms).round() as u64).clamp(1, u32::MAX as u64) as u32;
    let mut measured = median_check_ms(&salt, iterations, samples);
    for _ in 0..8 {
        if (measured - target_ms).abs() <= target_ms * CALIBRATION_TOLERANCE / 3.0 {
            break;
        }
        let scaled = (iterations as f64 * target_ms / measured).round();
        iterations = scaled.clamp(1.0, u32::MAX as f64) as u32;
        measured = median_check_ms(&salt, iterations, samples);
    }
    if (measured - target_ms).abs() > target_ms * CALIBRATION_TOLERANCE {
        return Err(BenchError::Calibration(format!(
            "best count {iterations} measured {measured:.3} ms against target {target_ms} ms"
        )));
    }
    Ok(Calibration {
        iterations,
        target_ms,
        measured_ms: measured,
    })
}

fn check_trials(trials: usize) -> Result<(), BenchError> {
    if trials < MIN_TRIALS {
        Err(BenchError::TooFewTrials(trials))
    } else {
        Ok(())
    }
}

/// Runs `WARMUP_TRIALS` discarded trials, then `trials` measured ones.
fn measure<F>(trials: usize, mut one: F) -> Result<Vec<TrialTiming>, BenchError>
where
    F: FnMut() -> Result<TrialTiming, BenchError>,
{
    for _ in 0..WARMUP_TRIALS {
        one()?;
    }
    (0..trials).map(|_| one()).collect()
}

pub fn time_password_auth(trials: usize, iterations: u32) -> Result<TimingRow, BenchError> {
    time_password_auth_with(trials, iterations, &Entropy::os())
}

pub fn time_password_auth_with(trials: usize, iterations: u32, entropy: &Entropy) -> Result<TimingRow, BenchError> {
    check_trials(trials)?;
    let password = bench_password();
    let verifier = PasswordVerifier::new(&password, entropy.array(), iterations);
    let timings = measure(trials, || {
        let start = Instant::now();
        let ok = verifier.verify(std::hint::black_box(&password));
        let verify_us = micros(start.elapsed());
        if !ok {
            return Err(BenchError::Setup("password check rejected the correct password".into()));
        }
        Ok(TrialTiming { create_us: 0, verify_us })
    })?;
    TimingRow::from_trials(ModelKind::Password, timings)
}

// ---- passwordless ----

pub fn time_fido_auth(trials: usize) -> Result<TimingRow, BenchError> {
    time_fido_auth_with(trials, Entropy::os())
}

/// Challenge creation is `begin_authentication`; verification is the
/// authenticator producing the assertion plus the server verifying it.
pub fn time_fido_auth_with(trials: usize, entropy: Entropy) -> Result<TimingRow, BenchError> {
    check_trials(trials)?;
    let rp = RpServer::with_parts(RpConfig::new(BENCH_RP), system_clock(), entropy);
    let user = rp.register_user("bench@passgate.local", "Bench").map_err(setup)?;
    let mut device = AuthenticatorDevice::new(DeviceKind::SecurityKey);
    let reg = rp.begin_registration(user.user_id(), BENCH_RP).map_err(setup)?;
    let att = device.make_credential(&reg, BENCH_RP, user.user_id()).map_err(setup)?;
    let cred = rp.finish_registration(&att, reg.nonce()).map_err(setup)?;

    let timings = measure(trials, || {
        let start = Instant::now();
        let challenge = rp.begin_authentication(user.user_id(), BENCH_RP).map_err(setup)?;
        let create_us = micros(start.elapsed());

        let start = Instant::now();
        let assertion = device
            .get_assertion(&challenge, BENCH_RP, &cred.credential_id, true)
            .map_err(setup)?;
        let result = rp.finish_authentication(&assertion, challenge.nonce());
        let verify_us = micros(start.elapsed());
        if !result.ok {
            return Err(BenchError::Setup(format!("assertion rejected: {:?}", result.failure)));
        }
        Ok(TrialTiming { create_us, verify_us })
    })?;
    TimingRow::from_trials(ModelKind::Passwordless, timings)
}

// ---- face ----

fn unit_vector(entropy: &Entropy) -> Vec<f64> {
    let v: Vec<f64> = (0..EMBEDDING_DIM)
        .map(|_| {
            let b: [u8; 8] = entropy.array();
            (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Desk-scale face verification: PAD plus the embedding matcher, no deep model.
pub fn time_face_auth(trials: usize, entropy: &Entropy) -> Result<TimingRow, BenchError> {
    check_trials(trials)?;
    let faces = FaceRegistry::new(Arc::new(ReferencePad), system_clock());
    let user = crate::ids::UserId::from("bench-face");
    let template = unit_vector(entropy);
    faces.enroll(&user, &template).map_err(setup)?;
    let live = [0.05, 0.1, 0.05, 0.1];
    let timings = measure(trials, || {
        let start = Instant::now();
        let decision = faces.verify_face(&user, &template, &live).map_err(setup)?;
        let verify_us = micros(start.elapsed());
        if !decision.accepted {
            return Err(BenchError::Setup("genuine probe rejected".into()));
        }
        Ok(TrialTiming { create_us: 0, verify_us })
    })?;
    TimingRow::from_trials(ModelKind::FacialRecognition, timings)
}

// ---- report ----

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingReport {
    /// Model rows in fixed order: password, face, passwordless, combined.
    pub rows: Vec<TimingRow>,
}

/// Builds the report. Whenever the face and passwordless rows are both
/// present the combined row is (re)computed from them.
pub fn emit_report(rows: Vec<TimingRow>) -> Result<TimingReport, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Validation("no timing rows".into()));
    }
    let mut rows = rows;
    rows.sort_by_key(|r| r.model);
    for pair in rows.windows(2) {
        if pair[0].model == pair[1].model {
            return Err(BenchError::Validation(format!("duplicate row for {:?}", pair[0].model)));
        }
    }
    let face = rows.iter().find(|r| r.model == ModelKind::FacialRecognition).cloned();
    let fido = rows.iter().find(|r| r.model == ModelKind::Passwordless).cloned();
    if let (Some(face), Some(fido)) = (face, fido) {
        rows.retain(|r| r.model != ModelKind::Combined);
        rows.push(TimingRow {
            label: ModelKind::Combined.label().to_owned(),
            model: ModelKind::Combined,
            trials: Vec::new(),
            create_us: face.create_us + fido.create_us,
            verify_us: face.verify_us + fido.verify_us,
            total_us: face.total_us + fido.total_us,
        });
    }
    Ok(TimingReport { rows })
}

impl TimingReport {
    pub fn row(&self, model: ModelKind) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// `password > combined > passwordless`, when all three rows exist.
    pub fn ordering_holds(&self) -> Option<bool> {
        let p = self.row(ModelKind::Password)?.total_us;
        let c = self.row(ModelKind::Combined)?.total_us;
        let f = self.row(ModelKind::Passwordless)?.total_us;
        Some(p > c && c > f)
    }

    fn time_cell(&self, row: &TimingRow) -> String {
        match (row.model, self.row(ModelKind::FacialRecognition), self.row(ModelKind::Passwordless)) {
            (ModelKind::Combined, Some(face), Some(fido)) => format!(
                "{} + {} = {} ms",
                format_ms(face.total_us),
                format_ms(fido.total_us),
                format_ms(row.total_us)
            ),
            _ => format!("{} ms", format_ms(row.total_us)),
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(fido) = self.row(ModelKind::Passwordless) {
            out.push_str("FIDO authentication time taken\n\n");
            let header = [
                "Sl.No",
                "Time taken to create challenge",
                "Time taken to verify challenge and authenticate user",
                "Total time for processing",
            ];
            let mut body: Vec<[String; 4]> = fido
                .trials
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    [
                        format!("{}.", i + 1),
                        format!("{} ms", format_ms(t.create_us)),
                        format!("{} ms", format_ms(t.verify_us)),
                        format!("{} ms", format_ms(t.total_us())),
                    ]
                })
                .collect();
            body.push([
                "Average".into(),
                format!("{} ms", format_ms(fido.create_us)),
                format!("{} ms", format_ms(fido.verify_us)),
                format!("{} ms", format_ms(fido.total_us)),
            ]);
            render_grid(&mut out, &header, &body);
            out.push('\n');
        }
        out.push_str("Authentication model comparison\n\n");
        let header = ["Authentication model", "Time taken", "Security"];
        let body: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| [r.label.clone(), self.time_cell(r), r.model.security().to_owned()])
            .collect();
        render_grid(&mut out, &header, &body);
        let _ = writeln!(
            out,
            "\nFace time is PAD plus embedding match on this host. Deep face models take about {} to {} ms per verification and are not measured here.",
            EXTERNAL_FACE_MODEL_MS.0, EXTERNAL_FACE_MODEL_MS.1
        );
        out
    }

    /// One CSV document: per-trial FIDO rows, their average, then the model rows.
    pub fn render_delimited(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(["table", "row", "label", "create_ms", "verify_ms", "total_ms", "security"]);
        if let Some(fido) = self.row(ModelKind::Passwordless) {
            for (i, t) in fido.trials.iter().enumerate() {
                let _ = w.write_record([
                    "fido".into(),
                    (i + 1).to_string(),
                    fido.label.clone(),
                    format_ms(t.create_us),
                    format_ms(t.verify_us),
                    format_ms(t.total_us()),
                    String::new(),
                ]);
            }
            let _ = w.write_record([
                "fido".into(),
                "average".into(),
                fido.label.clone(),
                format_ms(fido.create_us),
                format_ms(fido.verify_us),
                format_ms(fido.total_us),
                String::new(),
            ]);
        }
        for (i, r) in self.rows.iter().enumerate() {
            let _ = w.write_record([
                "comparison".into(),
                (i + 1).to_string(),
                r.label.clone(),
                format_ms(r.create_us),
                format_ms(r.verify_us),
                format_ms(r.total_us),
                r.model.security().to_owned(),
            ]);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

fn render_grid<const N: usize>(out: &mut String, header: &[&str; N], body: &[[String; N]]) {
    let mut widths = header.map(str::len);
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |out: &mut String, cells: [&str; N]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(out, *header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for row in body {
        line(out, std::array::from_fn(|i| row[i].as_str()));
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub trials: usize,
    pub target_password_ms: f64,
    pub seed: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: MIN_TRIALS,
            target_password_ms: 1056.4,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchOutcome {
    pub calibration: Calibration,
    pub report: TimingReport,
}

/// Runs every measurement single-threaded and builds the four-row report.
pub fn run_bench(config: &BenchConfig) -> Result<BenchOutcome, BenchError> {
    check_trials(config.trials)?;
    let entropy = || config.seed.map(Entropy::seeded).unwrap_or_else(Entropy::os);
    let mut calibration = calibrate_password_cost(config.target_password_ms)?;
    let target_us = config.target_password_ms * 1000.0;
    let mut password = time_password_auth_with(config.trials, calibration.iterations, &entropy())?;
    // The host can drift between calibration and measurement; rescale from
    // the measured mean rather than report an off-target baseline.
    for _ in 0..2 {
        let mean = password.total_us.max(1) as f64;
        if (mean - target_us).abs() <= target_us * CALIBRATION_TOLERANCE / 3.0 {
            break;
        }
        let scaled = (calibration.iterations as f64 * target_us / mean).round();
        calibration.iterations = scaled.clamp(1.0, u32::MAX as f64) as u32;
        password = time_password_auth_with(config.trials, calibration.iterations, &entropy())?;
        calibration.measured_ms = password.total_us as f64 / 1000.0;
    }
    let face = time_face_auth(config.trials, &entropy())?;
    let fido = time_fido_auth_with(config.trials, entropy())?;
    let report = emit_report(vec![password, face, fido])?;
    Ok(BenchOutcome { calibration, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: ModelKind, trials: &[(u64, u64)]) -> TimingRow {
        let t = trials
            .iter()
            .map(|&(c, v)| TrialTiming {
                create_us: c * 1000,
                verify_us: v * 1000,
            })
            .collect();
        TimingRow::from_trials(model, t).unwrap()
    }

    fn reference_fido() -> TimingRow {
        row(
            ModelKind::Passwordless,
            &[(212, 319), (193, 203), (224, 324), (234, 304), (260, 209)],
        )
    }

    #[test]
    fn reference_trials_average_exactly() {
        let r = reference_fido();
        assert_eq!(format_ms(r.create_us), "224.600");
        assert_eq!(format_ms(r.verify_us), "271.800");
        assert_eq!(format_ms(r.total_us), "496.400");
        assert_eq!(r.trial_times_ms(), vec![531.0, 396.0, 548.0, 538.0, 469.0]);
    }

    #[test]
    fn combined_is_face_plus_fido() {
        let face = TimingRow::from_trials(
            ModelKind::FacialRecognition,
            vec![TrialTiming { create_us: 0, verify_us: 128_000 }; 5],
        )
        .unwrap();
        let pw = TimingRow::from_trials(
            ModelKind::Password,
            vec![TrialTiming { create_us: 0, verify_us: 1_056_400 }; 5],
        )
        .unwrap();
        let report = emit_report(vec![reference_fido(), face, pw]).unwrap();
        let models: Vec<_> = report.rows.iter().map(|r| r.model).collect();
        assert_eq!(
            models,
            [ModelKind::Password, ModelKind::FacialRecognition, ModelKind::Passwordless, ModelKind::Combined]
        );
        assert_eq!(report.row(ModelKind::Combined).unwrap().total_us, 624_400);
        assert!(report.render_text().contains("128.000 + 496.400 = 624.400 ms"));
        assert_eq!(report.ordering_holds(), Some(true));
    }

    #[test]
    fn stale_combined_row_is_replaced() {
        let face = row(ModelKind::FacialRecognition, &[(0, 10); 5]);
        let bogus = row(ModelKind::Combined, &[(1, 1); 5]);
        let report = emit_report(vec![bogus, face, reference_fido()]).unwrap();
        assert_eq!(report.row(ModelKind::Combined).unwrap().total_us, 506_400);
    }

    #[test]
    fn empty_single_and_duplicate() {
        assert!(matches!(emit_report(vec![]), Err(BenchError::Validation(_))));
        let single = emit_report(vec![row(ModelKind::Password, &[(0, 3); 5])]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.ordering_holds(), None);
        assert!(single.render_text().contains("Password Authentication"));
        let dup = vec![row(ModelKind::Password, &[(0, 3); 5]), row(ModelKind::Password, &[(0, 4); 5])];
        assert!(emit_report(dup).is_err());
    }

    #[test]
    fn table_layout() {
        let report = emit_report(vec![reference_fido()]).unwrap();
        let text = report.render_text();
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.iter().find(|l| l.contains("Sl.No")).unwrap();
        for col in [
            "Time taken to create challenge",
            "Time taken to verify challenge and authenticate user",
            "Total time for processing",
        ] {
            assert!(header.contains(col));
        }
        let avg = lines.iter().find(|l| l.starts_with("| Average")).unwrap();
        assert!(avg.contains("224.600 ms") && avg.contains("496.400 ms"));
        assert_eq!(lines.iter().filter(|l| l.starts_with("| ") && l.contains(". ")).count(), 5);
        let table: Vec<&&str> = lines.iter().filter(|l| l.starts_with('|')).take(8).collect();
        assert!(table.iter().all(|l| l.len() == table[0].len()));
    }

    #[test]
    fn rendering_is_deterministic() {
        let build = || emit_report(vec![reference_fido(), row(ModelKind::FacialRecognition, &[(0, 128); 5])]).unwrap();
        assert_eq!(build().render_text().as_bytes(), build().render_text().as_bytes());
        assert_eq!(build().render_delimited(), build().render_delimited());
    }

    #[test]
    fn delimited_parses_back() {
        let report = emit_report(vec![reference_fido(), row(ModelKind::FacialRecognition, &[(0, 128); 5])]).unwrap();
        let text = report.render_delimited();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        assert_eq!(records.len(), 5 + 1 + 3);
        let combined = records.last().unwrap();
        assert_eq!(&combined[5], "624.400");
        assert_eq!(&combined[6], "Extremely high");
        let face: f64 = records[6][5].parse().unwrap();
        let fido: f64 = records[7][5].parse().unwrap();
        assert_eq!(format!("{:.3}", face + fido), "624.400");
    }

    #[test]
    fn rounding_keeps_total_additive() {
        let r = TimingRow::from_trials(
            ModelKind::Passwordless,
            vec![
                TrialTiming { create_us: 1, verify_us: 2 },
                TrialTiming { create_us: 2, verify_us: 2 },
            ],
        )
        .unwrap();
        assert_eq!(r.total_us, r.create_us + r.verify_us);
    }

    #[test]
    fn password_verifier() {
        let pw = bench_password();
        assert_eq!(pw.chars().count(), PASSWORD_LEN);
        assert!(pw.chars().all(|c| c.is_ascii_graphic()));
        let v = PasswordVerifier::new(&pw, [1; 16], 10);
        assert!(v.verify(&pw));
        assert!(!v.verify("wrong"));
        // h1 = H(salt ‖ pw), h2 = H(h1)
        let h1: [u8; 32] = Sha256::digest([&[7u8; 16][..], b"pw"].concat()).into();
        let h2: [u8; 32] = Sha256::digest(h1).into();
        assert_eq!(iterated_sha256(&[7; 16], b"pw", 1), h1);
        assert_eq!(iterated_sha256(&[7; 16], b"pw", 2), h2);
    }

    #[test]
    fn calibration_rejects_nonpositive_targets() {
        for t in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(calibrate_password_cost(t), Err(BenchError::Calibration(_))));
        }
        assert!(matches!(calibrate_password_cost(1e-7), Err(BenchError::Calibration(_))));
    }

    #[test]
    fn calibration_hits_small_target() {
        let c = calibrate_password_cost(1.0).unwrap();
        assert!((c.measured_ms - 1.0).abs() <= CALIBRATION_TOLERANCE, "{c:?}");
        assert!(c.iterations > 1);
    }

    #[test]
    fn trial_floor() {
        assert!(matches!(time_password_auth(4, 1), Err(BenchError::TooFewTrials(4))));
        assert!(matches!(time_fido_auth(0), Err(BenchError::TooFewTrials(0))));
        let r = time_password_auth(5, 1).unwrap();
        assert_eq!(r.trials.len(), 5);
        assert_eq!(r.label, "Password Authentication");
    }
}
