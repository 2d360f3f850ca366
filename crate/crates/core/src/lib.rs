//! Federated aggregate queries: vetted aggregate algorithms run next to the
//! data, and only signed, threshold-suppressed answers leave a provider.
//!
//! Module map:
//!
//! * [`canonical`], [`signing`] and [`protocol`]: wire types, canonical bytes and signatures
//! * [`dsl`]: the aggregate-only algorithm language
//! * [`dataset`]: CSV ingestion into immutable snapshots
//! * [`policy`]: k-threshold suppression and the differencing guard
//! * [`consent`]: consent rules, tokens, receipts and masks
//! * [`audit`]: hash-chained audit log
//! * [`provider`]: the data-provider contract pipeline
//! * [`gateway`]: federation routing and collation
//! * [`transport`], [`server`], [`config`], [`cli`]: services and the querier client

pub mod audit;
pub mod canonical;
pub mod cli;
pub mod config;
pub mod consent;
pub mod dataset;
pub mod dsl;
pub mod gateway;
pub mod policy;
pub mod protocol;
pub mod provider;
pub mod registry;
pub mod schema;
pub mod server;
pub mod signing;
pub mod store;
pub mod time;
pub mod transport;
