use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Plain,
    Debug,
    Sanitized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instrumentation {
    AddressChecks,
    LeakChecks,
    UndefinedBehaviorChecks,
}

/// Compiler configuration for one build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildProfile {
    pub name: ProfileName,
    pub instrumentation: BTreeSet<Instrumentation>,
    pub debug_info: bool,
    pub optimization_level: u8,
}

impl BuildProfile {
    pub fn plain() -> Self {
        BuildProfile {
            name: ProfileName::Plain,
            instrumentation: BTreeSet::new(),
            debug_info: false,
            optimization_level: 2,
        }
    }

    /// `-g -O0`: one source line per statement for line stepping.
    pub fn debug() -> Self {
        BuildProfile {
            name: ProfileName::Debug,
            instrumentation: BTreeSet::new(),
            debug_info: true,
            optimization_level: 0,
        }
    }

    /// `-g -O0 -fsanitize=address,leak,undefined -fno-omit-frame-pointer`.
    pub fn sanitized() -> Self {
        BuildProfile {
            name: ProfileName::Sanitized,
            instrumentation: [
                Instrumentation::AddressChecks,
                Instrumentation::LeakChecks,
                Instrumentation::UndefinedBehaviorChecks,
            ]
            .into(),
            debug_info: true,
            optimization_level: 0,
        }
    }

    pub fn for_name(name: ProfileName) -> Self {
        match name {
            ProfileName::Plain => Self::plain(),
            ProfileName::Debug => Self::debug(),
            ProfileName::Sanitized => Self::sanitized(),
        }
    }

    /// Checks the per-profile invariants.
    pub fn check(&self) -> Result<(), String> {
        match self.name {
            ProfileName::Sanitized if self.instrumentation.len() != 3 => {
                Err("sanitized profile requires address, leak and undefined-behavior checks".into())
            }
            ProfileName::Debug if !self.debug_info || self.optimization_level != 0 => {
                Err("debug profile requires debug info at optimization level 0".into())
            }
            ProfileName::Plain if !self.instrumentation.is_empty() => {
                Err("plain profile carries no instrumentation".into())
            }
            _ => Ok(()),
        }
    }

    /// Compiler flags, in a fixed order.
    pub fn flags(&self) -> Vec<String> {
        let mut flags = Vec::new();
        if self.debug_info {
            flags.push("-g".to_string());
        }
        flags.push(format!("-O{}", self.optimization_level));
        if !self.instrumentation.is_empty() {
            let kinds: Vec<&str> = self
                .instrumentation
                .iter()
                .map(|i| match i {
                    Instrumentation::AddressChecks => "address",
                    Instrumentation::LeakChecks => "leak",
                    Instrumentation::UndefinedBehaviorChecks => "undefined",
                })
                .collect();
            flags.push(format!("-fsanitize={}", kinds.join(",")));
            flags.push("-fno-omit-frame-pointer".to_string());
        }
        flags
    }
}

impl fmt::Display for BuildProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} ({})", self.name, self.flags().join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toolchain_flags_are_exact() {
        assert_eq!(BuildProfile::debug().flags(), ["-g", "-O0"]);
        assert_eq!(
            BuildProfile::sanitized().flags(),
            ["-g", "-O0", "-fsanitize=address,leak,undefined", "-fno-omit-frame-pointer"]
        );
        assert_eq!(BuildProfile::plain().flags(), ["-O2"]);
    }

    #[test]
    fn profile_invariants() {
        for p in [BuildProfile::plain(), BuildProfile::debug(), BuildProfile::sanitized()] {
            p.check().unwrap();
        }
        let mut bad = BuildProfile::debug();
        bad.optimization_level = 2;
        assert!(bad.check().is_err());
        let mut bad = BuildProfile::sanitized();
        bad.instrumentation.remove(&Instrumentation::LeakChecks);
        assert!(bad.check().is_err());
    }
}
