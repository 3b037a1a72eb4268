//! Library half of the `passgate` binary: configuration, transports, the
//! typed client, sealed device storage and the attack scenarios.

pub mod client;
pub mod config;
pub mod devices;
pub mod scenarios;
pub mod server;
pub mod transport;

pub use client::{Client, ClientError};
pub use config::{Config, ConfigError};
pub use devices::{DeviceStore, DeviceStoreError};
pub use scenarios::{run_scenario, Scenario, ScenarioResult};
pub use transport::{Transport, TransportError};
