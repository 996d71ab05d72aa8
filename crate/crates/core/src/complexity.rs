//! Closed-form FLOP counts and block budgets for the four estimators.

use serde::{Deserialize, Serialize};

use crate::error::DoaError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "apa")]
    Apa,
    #[serde(rename = "hadpa")]
    Hadpa,
    #[serde(rename = "hdapa")]
    Hdapa,
    #[serde(rename = "rm-hdapa")]
    RootMusicHdapa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Apa, Method::Hadpa, Method::Hdapa, Method::RootMusicHdapa];

    pub fn name(self) -> &'static str {
        match self {
            Method::Apa => "apa",
            Method::Hadpa => "hadpa",
            Method::Hdapa => "hdapa",
            Method::RootMusicHdapa => "rm-hdapa",
        }
    }

    /// Whether the estimator sweeps a search grid (and so depends on `Q`).
    pub fn uses_grid(self) -> bool {
        !matches!(self, Method::RootMusicHdapa)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self, DoaError> {
        match s.to_ascii_lowercase().as_str() {
            "apa" => Ok(Method::Apa),
            "hadpa" => Ok(Method::Hadpa),
            "hdapa" => Ok(Method::Hdapa),
            "rm-hdapa" | "root-music-hdapa" | "rmhdapa" => Ok(Method::RootMusicHdapa),
            _ => Err(DoaError::UnknownMethod(s.to_string())),
        }
    }
}

/// FLOP count of one estimate.
///
/// | method   | count                                   |
/// |----------|-----------------------------------------|
/// | APA      | `(Q+1) L K M`                           |
/// | HADPA    | `(Q+1) L (K+M)`                         |
/// | HDAPA    | `(Q+1) L K + L M^2`                     |
/// | RM-HDAPA | `K^2 L + (2(K-1))^3 + L((2K-2)K + M^2)` |
pub fn complexity_model(method: Method, q: u64, l: u64, k: u64, m: u64) -> u128 {
    let (q, l, k, m) = (q as u128, l as u128, k as u128, m as u128);
    match method {
        Method::Apa => (q + 1) * l * k * m,
        Method::Hadpa => (q + 1) * l * (k + m),
        Method::Hdapa => (q + 1) * l * k + l * m * m,
        Method::RootMusicHdapa => {
            let two_k_2 = 2 * k.saturating_sub(1);
            k * k * l + two_k_2.pow(3) + l * (two_k_2 * k + m * m)
        }
    }
}

/// Blocks one estimate acquires: `Q+1` for the analog sweeps, `M+1` for the
/// digital-first methods.
pub fn block_budget(method: Method, q: u64, m: u64) -> u64 {
    match method {
        Method::Apa | Method::Hadpa => q + 1,
        Method::Hdapa | Method::RootMusicHdapa => m + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(complexity_model(Method::Apa, 1440, 32, 16, 8), 5_902_336);
        assert_eq!(complexity_model(Method::Hadpa, 1440, 32, 16, 8), 32 * 1441 * 24);
        assert_eq!(
            complexity_model(Method::Hdapa, 1440, 32, 16, 8),
            1441 * 32 * 16 + 32 * 64
        );
        assert_eq!(
            complexity_model(Method::RootMusicHdapa, 1440, 32, 16, 8),
            16 * 16 * 32 + 30u128.pow(3) + 32 * (30 * 16 + 64)
        );
    }

    #[test]
    fn root_music_is_independent_of_q() {
        let a = complexity_model(Method::RootMusicHdapa, 10, 32, 16, 8);
        let b = complexity_model(Method::RootMusicHdapa, 100_000, 32, 16, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("music".parse::<Method>().is_err());
    }
}
