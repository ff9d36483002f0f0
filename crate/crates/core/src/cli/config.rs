//! Profile files: one `key = value` per line, `#` starts a comment.
//!
//! ```text
//! preset = gmail
//! address = me@gmail.com
//! credential_ref = EMFS_PASSWORD
//! ```
//!
//! A preset fills in endpoints and the size limit; any key given
//! explicitly overrides it. Without a preset `smtp`, `imap` and
//! `size_limit` are required.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::transport::{Endpoint, ProviderProfile, GMAIL_SIZE_LIMIT, OUTLOOK_SIZE_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing key {0:?}")]
    Missing(&'static str),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: &'static str, reason: String },
}

const KEYS: &[&str] = &[
    "preset",
    "smtp",
    "imap",
    "username",
    "address",
    "credential_ref",
    "size_limit",
    "root_folder",
    "use_tls",
];

pub const DEFAULT_CREDENTIAL_REF: &str = "EMFS_PASSWORD";

struct Preset {
    smtp: (&'static str, u16),
    imap: (&'static str, u16),
    size_limit: u64,
}

fn preset(name: &str) -> Option<Preset> {
    match name.to_ascii_lowercase().as_str() {
        "gmail" => Some(Preset {
            smtp: ("smtp.gmail.com", 587),
            imap: ("imap.gmail.com", 993),
            size_limit: GMAIL_SIZE_LIMIT,
        }),
        "outlook" => Some(Preset {
            smtp: ("smtp-mail.outlook.com", 587),
            imap: ("outlook.office365.com", 993),
            size_limit: OUTLOOK_SIZE_LIMIT,
        }),
        _ => None,
    }
}

pub fn parse_profile(text: &str) -> Result<ProviderProfile, ConfigError> {
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: "expected key = value".into(),
            });
        };
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey(key.to_owned()));
        };
        if values.insert(known, value.trim().to_owned()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: format!("{key} given twice"),
            });
        }
    }

    let preset = match values.get("preset") {
        Some(name) => Some(preset(name).ok_or_else(|| ConfigError::BadValue {
            key: "preset",
            reason: format!("unknown preset {name:?}, expected gmail or outlook"),
        })?),
        None => None,
    };
    let endpoint = |key: &'static str, fallback: Option<(&str, u16)>| match values.get(key) {
        Some(v) => v
            .parse::<Endpoint>()
            .map_err(|reason| ConfigError::BadValue { key, reason }),
        None => fallback
            .map(|(host, port)| Endpoint::new(host, port))
            .ok_or(ConfigError::Missing(key)),
    };
    let smtp_endpoint = endpoint("smtp", preset.as_ref().map(|p| p.smtp))?;
    let imap_endpoint = endpoint("imap", preset.as_ref().map(|p| p.imap))?;
    let size_limit_s = match values.get("size_limit") {
        Some(v) => v.parse::<u64>().map_err(|e| ConfigError::BadValue {
            key: "size_limit",
            reason: e.to_string(),
        })?,
        None => preset
            .as_ref()
            .map(|p| p.size_limit)
            .ok_or(ConfigError::Missing("size_limit"))?,
    };
    let use_tls = match values.get("use_tls").map(String::as_str) {
        None | Some("true") | Some("yes") | Some("on") => true,
        Some("false") | Some("no") | Some("off") => false,
        Some(other) => {
            return Err(ConfigError::BadValue {
                key: "use_tls",
                reason: format!("expected true or false, got {other:?}"),
            })
        }
    };
    let address = values
        .get("address")
        .cloned()
        .ok_or(ConfigError::Missing("address"))?;
    let profile = ProviderProfile {
        smtp_endpoint,
        imap_endpoint,
        username: values
            .get("username")
            .cloned()
            .unwrap_or_else(|| address.clone()),
        address,
        credential_ref: values
            .get("credential_ref")
            .cloned()
            .unwrap_or_else(|| DEFAULT_CREDENTIAL_REF.to_owned()),
        size_limit_s,
        root_folder: values
            .get("root_folder")
            .cloned()
            .unwrap_or_else(|| ProviderProfile::DEFAULT_ROOT.to_owned()),
        use_tls,
    };
    profile.validate().map_err(|reason| ConfigError::BadValue {
        key: "profile",
        reason,
    })?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmail_preset_fills_endpoints() {
        let p = parse_profile("preset = gmail\naddress = a@gmail.com\n").unwrap();
        assert_eq!(p.smtp_endpoint, Endpoint::new("smtp.gmail.com", 587));
        assert_eq!(p.imap_endpoint, Endpoint::new("imap.gmail.com", 993));
        assert_eq!(p.size_limit_s, 26_214_400);
        assert_eq!(p.username, "a@gmail.com");
        assert_eq!(p.credential_ref, "EMFS_PASSWORD");
        assert_eq!(p.root_folder, "EMFS");
        assert!(p.use_tls);
    }

    #[test]
    fn outlook_preset_limit() {
        let p = parse_profile("preset = outlook\naddress = a@outlook.com").unwrap();
        assert_eq!(p.size_limit_s, 20_971_520);
    }

    #[test]
    fn explicit_keys_override_preset() {
        let p = parse_profile(
            "# test\npreset = gmail\naddress = a@b\nsize_limit = 100\nroot_folder = Files\nuse_tls = off\n",
        )
        .unwrap();
        assert_eq!(p.size_limit_s, 100);
        assert_eq!(p.root_folder, "Files");
        assert!(!p.use_tls);
    }

    #[test]
    fn without_preset_endpoints_are_required() {
        assert_eq!(
            parse_profile("address = a@b\nsize_limit = 10"),
            Err(ConfigError::Missing("smtp"))
        );
        let p = parse_profile("address = a@b\nsmtp = h:25\nimap = h:143\nsize_limit = 10").unwrap();
        assert_eq!(p.imap_endpoint, Endpoint::new("h", 143));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_profile("nonsense"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert_eq!(
            parse_profile("colour = red"),
            Err(ConfigError::UnknownKey("colour".into()))
        );
        assert!(parse_profile("preset = yahoo\naddress = a").is_err());
        assert!(parse_profile("preset = gmail\naddress = a\nsize_limit = 0").is_err());
        assert!(parse_profile("preset = gmail\naddress = a\nroot_folder = INBOX").is_err());
        assert!(parse_profile("preset = gmail").is_err());
        assert!(parse_profile("address = a\naddress = b").is_err());
    }
}
