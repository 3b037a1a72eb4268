use std::error::Error;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use passgate_cli::{run_scenario, Client, Config, DeviceStore, Scenario, ScenarioResult, Transport};
use passgate_core::api::Service;
use passgate_core::bench_harness::{self, BenchConfig};
use passgate_core::sim::{random_unit, LIVE_PAD};
use passgate_core::{
    AuthenticatorDevice, CredentialId, DeviceId, DeviceKind, Entropy, FaceRegistry, KeyAdmin, RpConfig, RpServer,
    SessionState, Step, StepEvidence, UserId,
};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser, Debug)]
#[command(name = "passgate", version, about = "Passwordless triple-layer authentication")]
struct Cli {
    /// TOML configuration file; PASSGATE_* variables override it.
    #[arg(long, global = true, env = "PASSGATE_CONFIG")]
    config: Option<PathBuf>,
    /// Base URL of a running server (overrides client.server_url).
    #[arg(long, global = true)]
    server: Option<String>,
    /// Fixes every random choice except key generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP server.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    EnrollUser {
        #[arg(long)]
        email: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Create a simulated device, register it and keep it sealed locally.
    EnrollDevice {
        #[arg(long)]
        user: String,
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Enroll a face template; without --vector a random one is generated
    /// and remembered as this user's simulated camera input.
    EnrollFace {
        #[arg(long)]
        user: String,
        /// JSON array of floats.
        #[arg(long)]
        vector: Option<PathBuf>,
    },
    /// Log in through all three layers with the locally stored devices.
    Login {
        #[arg(long)]
        user: String,
        #[arg(long, default_value = "portal.example")]
        service_provider: String,
        #[arg(long, default_value = "cli")]
        origin: String,
    },
    /// Run one attack scenario, or `all`.
    Scenario {
        name: String,
        #[arg(long)]
        json: bool,
    },
    Bench {
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 1056.4)]
        target_password_ms: f64,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    Admin {
        #[command(subcommand)]
        action: AdminCommand,
    },
}

#[derive(Subcommand, Debug)]
enum AdminCommand {
    List {
        #[arg(long)]
        user: String,
    },
    Revoke {
        #[arg(long)]
        credential: String,
    },
    Wipe {
        #[arg(long)]
        device: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Smartphone,
    SecurityKey,
}

impl From<Kind> for DeviceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Smartphone => DeviceKind::Smartphone,
            Kind::SecurityKey => DeviceKind::SecurityKey,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Delimited,
}

fn entropy(config: &Config) -> Entropy {
    config.seed.map(Entropy::seeded).unwrap_or_else(Entropy::os)
}

fn build_service(config: &Config) -> Result<Arc<Service>> {
    let rp = Arc::new(RpServer::with_parts(
        RpConfig::new(config.server.rp_id.clone()),
        passgate_core::clock::system_clock(),
        entropy(config),
    ));
    let mut admin = KeyAdmin::new(rp.clone(), config.server.admin_secret.clone());
    if let Some(path) = &config.server.audit_log {
        admin = admin.with_audit_file(path.clone());
    }
    let mut service = Service::new(rp, Arc::new(FaceRegistry::default()), &config.server.admin_secret).with_admin(admin);
    if let Some(dir) = &config.server.data_dir {
        service = service.with_persistence(dir.clone())?;
    }
    Ok(Arc::new(service))
}

/// A client for the configured server, or for an embedded one. Commands
/// whose effects must outlive the process need one or the other to persist.
fn client(config: &Config, needs_state: bool) -> Result<Client> {
    let transport = match &config.client.server_url {
        Some(url) => Transport::http(url, Duration::from_millis(config.client.timeout_ms)),
        None => {
            if needs_state && config.server.data_dir.is_none() {
                return Err("no server: set client.server_url, or server.data_dir to use an embedded one".into());
            }
            Transport::InProcess(build_service(config)?)
        }
    };
    Ok(Client::new(transport).with_admin_secret(config.server.admin_secret.clone()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn device_store(config: &Config) -> Result<DeviceStore> {
    Ok(DeviceStore::open(&config.client.device_dir, &config.client.device_secret)?)
}

fn serve(config: &Config, listen: Option<String>) -> Result<ExitCode> {
    let addr: SocketAddr = listen.as_deref().unwrap_or(&config.server.listen).parse()?;
    if config.server.admin_secret.is_empty() {
        eprintln!("warning: no admin secret configured; admin routes will reject every call");
    }
    let service = build_service(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("serving rp_id {} on http://{}", service.rp.rp_id(), listener.local_addr()?);
        passgate_cli::server::serve(service, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(ExitCode::SUCCESS)
}

fn enroll_device(config: &Config, user: &str, kind: DeviceKind) -> Result<ExitCode> {
    let client = client(config, true)?;
    let store = device_store(config)?;
    let user = UserId::from(user);
    let mut device = AuthenticatorDevice::new(kind);
    let challenge = client.begin_registration(&user)?;
    let attestation = device.make_credential(&challenge, challenge.rp_id(), &user)?;
    let credential = client.finish_registration(&attestation, challenge.nonce())?;
    store.save(&device, &user, vec![credential.credential_id.clone()])?;
    print_json(&credential)?;
    Ok(ExitCode::SUCCESS)
}

fn enroll_face(config: &Config, user: &str, vector: Option<PathBuf>) -> Result<ExitCode> {
    let client = client(config, true)?;
    let store = device_store(config)?;
    let user = UserId::from(user);
    let vector: Vec<f64> = match vector {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => random_unit(&entropy(config)),
    };
    client.enroll_face(&user, &vector)?;
    store.save_face(&user, &vector)?;
    println!("enrolled face template for {user}");
    Ok(ExitCode::SUCCESS)
}

fn login(config: &Config, user: &str, service_provider: &str, origin: &str) -> Result<ExitCode> {
    let client = client(config, true)?;
    let store = device_store(config)?;
    let user = UserId::from(user);
    let mut devices = Vec::new();
    for kind in [DeviceKind::Smartphone, DeviceKind::SecurityKey] {
        let (mut device, record) = store.find(&user, kind)?;
        let directives = client.checkin(device.device_id())?;
        if device.apply_directives(&directives) > 0 || !directives.is_empty() {
            eprintln!("{} {} received {:?}", kind, device.device_id(), directives);
        }
        store.save(&device, &record.owner, record.credentials.clone())?;
        let credential = record.credentials.first().cloned().ok_or("stored device has no credential")?;
        devices.push((device, record, credential));
    }
    let face = store.load_face(&user)?;

    let session = client.request_login(&user, service_provider, origin)?;
    let id = session.session_id;
    eprintln!("session {id}");
    for (step, slot) in [(Step::DeviceAttestation, Some(0)), (Step::SecurityKey, Some(1)), (Step::Face, None)] {
        let evidence = match slot {
            Some(i) => {
                let (device, record, credential) = &mut devices[i];
                let challenge = client.begin_authentication(&user)?;
                let assertion = device.get_assertion(&challenge, challenge.rp_id(), credential, true)?;
                store.save(device, &record.owner, record.credentials.clone())?;
                let challenge_nonce = *challenge.nonce();
                if step == Step::DeviceAttestation {
                    StepEvidence::DeviceAttestation {
                        assertion,
                        challenge_nonce,
                    }
                } else {
                    StepEvidence::SecurityKey {
                        assertion,
                        challenge_nonce,
                        device_confirmed: true,
                    }
                }
            }
            None => StepEvidence::Face {
                probe: face.clone(),
                pad_features: LIVE_PAD.to_vec(),
            },
        };
        let outcome = client.advance(&id, step, evidence)?;
        eprintln!("{step} -> {:?}", outcome.session.state);
        if let Some(failure) = outcome.failure {
            print_json(&outcome.session)?;
            eprintln!("{step} rejected: {}", serde_json::to_string(&failure)?);
            return Ok(ExitCode::FAILURE);
        }
    }
    let session = client.session(&id)?;
    print_json(&session)?;
    Ok(if session.state == SessionState::Complete {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn scenarios(config: &Config, name: &str, json: bool) -> Result<ExitCode> {
    let selected: Vec<Scenario> = if name.eq_ignore_ascii_case("all") {
        Scenario::ALL.to_vec()
    } else {
        vec![name.parse()?]
    };
    // The wipe scenario needs admin rights on the embedded server.
    let secret = match (&config.client.server_url, config.server.admin_secret.as_str()) {
        (None, "") => "scenario-admin",
        (_, s) => s,
    };
    let transport = match &config.client.server_url {
        Some(url) => Transport::http(url, Duration::from_millis(config.client.timeout_ms)),
        None => Transport::InProcess(passgate_cli::scenarios::embedded_service(
            &config.server.rp_id,
            secret,
            entropy(config),
        )),
    };
    let client = Client::new(transport).with_admin_secret(secret);
    let entropy = entropy(config);
    let mut results: Vec<ScenarioResult> = Vec::new();
    for s in selected {
        let r = run_scenario(&client, s, &entropy)?;
        if !json {
            println!(
                "{}  {:<13} expected {:?}, observed {:?}",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.expected,
                r.observed
            );
            for step in &r.steps {
                println!("        {step}");
            }
        }
        results.push(r);
    }
    if json {
        print_json(&results)?;
    }
    Ok(if results.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn bench(config: &Config, trials: usize, target_password_ms: f64, output: Output) -> Result<ExitCode> {
    let outcome = bench_harness::run_bench(&BenchConfig {
        trials,
        target_password_ms,
        seed: config.seed,
    })?;
    let c = outcome.calibration;
    eprintln!(
        "password cost: {} SHA-256 iterations, {:.1} ms measured for a {} ms target",
        c.iterations, c.measured_ms, c.target_ms
    );
    match output {
        Output::Text => print!("{}", outcome.report.render_text()),
        Output::Delimited => print!("{}", outcome.report.render_delimited()),
    }
    Ok(ExitCode::SUCCESS)
}

fn admin(config: &Config, action: AdminCommand) -> Result<ExitCode> {
    let client = client(config, true)?;
    match action {
        AdminCommand::List { user } => print_json(&client.admin_list(&UserId::from(user.as_str()))?)?,
        AdminCommand::Revoke { credential } => {
            print_json(&client.admin_revoke(&CredentialId::from(credential.as_str()))?)?
        }
        AdminCommand::Wipe { device } => print_json(&client.admin_wipe(&DeviceId::from(device.as_str()))?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(url) = cli.server {
        config.client.server_url = Some(url);
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    match cli.command {
        Command::Serve { listen } => serve(&config, listen),
        Command::EnrollUser { email, name } => {
            let client = client(&config, true)?;
            let name = name.unwrap_or_else(|| email.split('@').next().unwrap_or(&email).to_owned());
            print_json(&client.create_user(&email, &name)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EnrollDevice { user, kind } => enroll_device(&config, &user, kind.into()),
        Command::EnrollFace { user, vector } => enroll_face(&config, &user, vector),
        Command::Login {
            user,
            service_provider,
            origin,
        } => login(&config, &user, &service_provider, &origin),
        Command::Scenario { name, json } => scenarios(&config, &name, json),
        Command::Bench {
            trials,
            target_password_ms,
            output,
        } => bench(&config, trials, target_password_ms, output),
        Command::Admin { action } => admin(&config, action),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
