//! Published scaling exponents for six V100 training workloads, kept as
//! labeled constants for comparison against local fits.
//!
//! The ResNet50 exponent at 250 W differs between the uncapped table
//! (0.52) and the power-cap table (0.84). Both are stored as published.

use crate::telemetry::Domain;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceExponent {
    pub model: &'static str,
    pub domain: Domain,
    pub power_cap_w: f64,
    pub clock_cap_mhz: f64,
    pub beta: f64,
    pub beta_stderr: Option<f64>,
    pub r_squared: f64,
}

const fn entry(
    model: &'static str,
    domain: Domain,
    power_cap_w: f64,
    clock_cap_mhz: f64,
    beta: f64,
    beta_stderr: Option<f64>,
    r_squared: f64,
) -> ReferenceExponent {
    ReferenceExponent {
        model,
        domain,
        power_cap_w,
        clock_cap_mhz,
        beta,
        beta_stderr,
        r_squared,
    }
}

/// Uncapped V100 settings.
pub const MAX_POWER_W: f64 = 250.0;
pub const MAX_CLOCK_MHZ: f64 = 1380.0;

/// All six models at 250 W and 1380 MHz.
pub const UNCAPPED: [ReferenceExponent; 6] = [
    entry(
        "DimeNet",
        Domain::Geometric,
        250.0,
        1380.0,
        0.82,
        Some(0.03),
        0.99,
    ),
    entry(
        "SchNet",
        Domain::Geometric,
        250.0,
        1380.0,
        0.42,
        Some(0.05),
        0.90,
    ),
    entry("BERT", Domain::Nlp, 250.0, 1380.0, 0.87, Some(0.03), 0.97),
    entry("ResNet50", Domain::Vision, 250.0, 1380.0, 0.52, None, 0.95),
    entry("VGG16", Domain::Vision, 250.0, 1380.0, 0.64, None, 0.98),
    entry(
        "InceptionV3",
        Domain::Vision,
        250.0,
        1380.0,
        0.44,
        None,
        0.93,
    ),
];

/// DimeNet under clock caps at full power.
pub const DIMENET_CLOCK_CAPS: [ReferenceExponent; 3] = [
    entry("DimeNet", Domain::Geometric, 250.0, 135.0, 0.97, None, 1.0),
    entry("DimeNet", Domain::Geometric, 250.0, 735.0, 0.90, None, 0.99),
    entry(
        "DimeNet",
        Domain::Geometric,
        250.0,
        1380.0,
        0.82,
        None,
        0.99,
    ),
];

/// DimeNet under power caps at full clock.
pub const DIMENET_POWER_CAPS: [ReferenceExponent; 3] = [
    entry(
        "DimeNet",
        Domain::Geometric,
        100.0,
        1380.0,
        0.93,
        None,
        0.99,
    ),
    entry(
        "DimeNet",
        Domain::Geometric,
        200.0,
        1380.0,
        0.84,
        None,
        0.99,
    ),
    entry(
        "DimeNet",
        Domain::Geometric,
        250.0,
        1380.0,
        0.82,
        None,
        0.99,
    ),
];

pub const BERT_POWER_CAPS: [ReferenceExponent; 3] = [
    entry("BERT", Domain::Nlp, 100.0, 1380.0, 0.91, None, 0.99),
    entry("BERT", Domain::Nlp, 200.0, 1380.0, 0.86, None, 0.99),
    entry("BERT", Domain::Nlp, 250.0, 1380.0, 0.87, None, 0.99),
];

pub const RESNET50_POWER_CAPS: [ReferenceExponent; 3] = [
    entry("ResNet50", Domain::Vision, 100.0, 1380.0, 0.83, None, 1.0),
    entry("ResNet50", Domain::Vision, 200.0, 1380.0, 0.83, None, 0.99),
    entry("ResNet50", Domain::Vision, 250.0, 1380.0, 0.84, None, 0.99),
];

/// GPU count beyond which SchNet epoch times leave the power law.
pub const SCHNET_KNEE_GPUS: u32 = 64;

/// Reported carbon emission rate of 128 V100s.
pub const CARBON_KG_PER_HOUR_128_GPUS: f64 = 22.0;

/// Looks a model up in [`UNCAPPED`], ignoring ASCII case.
pub fn uncapped(model: &str) -> Option<&'static ReferenceExponent> {
    UNCAPPED
        .iter()
        .find(|r| r.model.eq_ignore_ascii_case(model))
}
