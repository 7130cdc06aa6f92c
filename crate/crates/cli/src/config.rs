//! Declarative run configuration, CLI overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dner_core::arbiter::{MockPolicy, PromptConfig, RetryPolicy, API_KEY_ENV};
use dner_core::evaluation::{Alpha, MetricKind};
use dner_core::formats::{ModelFormatKind, ResolveMode};
use dner_core::VoteConfig;

pub const RESOLVED_CONFIG_NAME: &str = "run-config.resolved";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Voting,
    Arbitrated,
    #[default]
    Both,
}

impl EnsembleMode {
    pub fn votes(self) -> bool {
        matches!(self, Self::Voting | Self::Both)
    }

    pub fn arbitrates(self) -> bool {
        matches!(self, Self::Arbitrated | Self::Both)
    }
}

impl FromStr for EnsembleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voting" => Ok(Self::Voting),
            "arbitrated" => Ok(Self::Arbitrated),
            "both" => Ok(Self::Both),
            other => Err(format!(
                "unknown mode {other:?} (expected voting, arbitrated or both)"
            )),
        }
    }
}

/// `live`, `mock:majority`, `mock:union`, `mock:echo_first` or `mock:<script path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientChoice {
    Live,
    Policy(MockPolicy),
    Script(PathBuf),
}

impl FromStr for ClientChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "live" {
            return Ok(Self::Live);
        }
        let Some(rest) = s.strip_prefix("mock:") else {
            return Err(format!(
                "unknown client {s:?} (expected live or mock:<policy|script>)"
            ));
        };
        if rest.is_empty() {
            return Err("mock client needs a policy or a script path".into());
        }
        Ok(match rest.parse::<MockPolicy>() {
            Ok(policy) => Self::Policy(policy),
            Err(_) => Self::Script(PathBuf::from(rest)),
        })
    }
}

impl fmt::Display for ClientChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Live => f.write_str("live"),
            Self::Policy(MockPolicy::Majority) => f.write_str("mock:majority"),
            Self::Policy(MockPolicy::Union) => f.write_str("mock:union"),
            Self::Policy(MockPolicy::EchoFirst) => f.write_str("mock:echo_first"),
            Self::Script(p) => write!(f, "mock:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub kind: ModelFormatKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gold: Option<PathBuf>,
    /// Dataset name used in metric tables.
    pub dataset: String,
    pub default_label: String,
    pub resolve_mode: ResolveMode,
    pub models: Vec<ModelSpec>,
    pub mode: EnsembleMode,
    pub strict_union: bool,
    pub client: Option<String>,
    pub endpoint: String,
    pub concurrency: usize,
    /// Request rate cap for the live client; 0 disables it.
    pub requests_per_second: f64,
    pub out: PathBuf,
    pub baseline: Option<String>,
    pub alpha: Alpha,
    pub rank_metrics: Vec<MetricKind>,
    pub vote: VoteConfig,
    pub prompt: PromptConfig,
    pub retry: RetryPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gold: None,
            dataset: "dataset".into(),
            default_label: "ADE".into(),
            resolve_mode: ResolveMode::Components,
            models: Vec::new(),
            mode: EnsembleMode::Both,
            strict_union: false,
            client: None,
            endpoint: DEFAULT_ENDPOINT.into(),
            concurrency: 4,
            requests_per_second: 0.0,
            out: PathBuf::from("out"),
            baseline: None,
            alpha: Alpha::P05,
            rank_metrics: MetricKind::ALL.to_vec(),
            vote: VoteConfig::default(),
            prompt: PromptConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Values given on the command line; each one replaces the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gold: Option<PathBuf>,
    pub dataset: Option<String>,
    pub mode: Option<EnsembleMode>,
    pub threshold: Option<usize>,
    pub strict_union: bool,
    pub client: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub concurrency: Option<usize>,
    pub out: Option<PathBuf>,
    pub baseline: Option<String>,
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a TOML config; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.gold = cfg.gold.map(|g| anchor(&base, &g));
        for m in &mut cfg.models {
            m.path = anchor(&base, &m.path);
        }
        cfg.out = anchor(&base, &cfg.out);
        if let Some(client) = &cfg.client {
            if let Ok(ClientChoice::Script(p)) = client.parse::<ClientChoice>() {
                cfg.client = Some(ClientChoice::Script(anchor(&base, &p)).to_string());
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(g) = &o.gold {
            self.gold = Some(g.clone());
        }
        if let Some(d) = &o.dataset {
            self.dataset = d.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(t) = o.threshold {
            self.vote = VoteConfig {
                threshold: Some(t),
                ..self.vote
            };
        }
        if o.strict_union {
            self.strict_union = true;
        }
        if let Some(c) = &o.client {
            self.client = Some(c.clone());
        }
        if let Some(p) = &o.mock_script {
            if o.client.as_deref().is_some_and(|c| !c.starts_with("mock")) {
                bail!(
                    "--mock-script conflicts with --client {}",
                    o.client.as_deref().unwrap_or_default()
                );
            }
            self.client = Some(ClientChoice::Script(p.clone()).to_string());
        }
        if let Some(e) = &o.endpoint {
            self.endpoint = e.clone();
        }
        if let Some(m) = &o.model_name {
            self.prompt.model_name = m.clone();
        }
        if let Some(t) = o.temperature {
            self.prompt.temperature = t;
        }
        if let Some(c) = o.concurrency {
            self.concurrency = c;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(b) = &o.baseline {
            self.baseline = Some(b.clone());
        }
        Ok(())
    }

    pub fn client_choice(&self) -> Result<Option<ClientChoice>> {
        self.client
            .as_deref()
            .map(|c| c.parse::<ClientChoice>().map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn gold_path(&self) -> Result<&Path> {
        self.gold
            .as_deref()
            .context("no gold file given (set `gold` in the config or pass --gold)")
    }

    /// Checks referenced paths and settings needed by the ensemble stage.
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.gold {
            ensure_exists(g, "gold file")?;
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            if m.id.is_empty() || m.id.contains(['/', '\\']) {
                bail!(
                    "model id {:?} must be non-empty and contain no path separators",
                    m.id
                );
            }
            if !ids.insert(m.id.as_str()) {
                bail!("model id {:?} is declared twice", m.id);
            }
            ensure_exists(&m.path, &format!("prediction file for model {}", m.id))?;
        }
        if self.concurrency == 0 {
            bail!("concurrency must be at least 1");
        }
        if !(self.requests_per_second >= 0.0 && self.requests_per_second.is_finite()) {
            bail!("requests_per_second must be a non-negative number");
        }
        match self.vote.threshold {
            Some(0) => bail!("vote threshold must be at least 1"),
            Some(t) if !self.models.is_empty() && t > self.models.len() => {
                bail!(
                    "vote threshold {t} exceeds the {} declared models",
                    self.models.len()
                )
            }
            _ => {}
        }
        self.prompt.validate()?;
        if let Some(ClientChoice::Script(p)) = self.client_choice()? {
            ensure_exists(&p, "mock script")?;
        }
        Ok(())
    }

    /// Extra checks before an arbitrated run: a client is selected and a
    /// live client has its credential.
    pub fn validate_for_arbitration(&self) -> Result<ClientChoice> {
        let choice = self.client_choice()?.context(
            "arbitrated mode needs a client (--client live or --client mock:<policy|script>)",
        )?;
        if choice == ClientChoice::Live
            && std::env::var(API_KEY_ENV).map_or(true, |k| k.trim().is_empty())
        {
            bail!("the live client needs the {API_KEY_ENV} environment variable");
        }
        Ok(choice)
    }

    /// TOML snapshot with every default filled in.
    pub fn to_resolved_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn ensure_exists(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_choices() {
        assert_eq!("live".parse::<ClientChoice>().unwrap(), ClientChoice::Live);
        assert_eq!(
            "mock:majority".parse::<ClientChoice>().unwrap(),
            ClientChoice::Policy(MockPolicy::Majority)
        );
        assert_eq!(
            "mock:scripts/a.jsonl".parse::<ClientChoice>().unwrap(),
            ClientChoice::Script("scripts/a.jsonl".into())
        );
        assert!("mock:".parse::<ClientChoice>().is_err());
        assert!("gpt".parse::<ClientChoice>().is_err());
        for s in ["live", "mock:union", "mock:echo_first", "mock:x.jsonl"] {
            assert_eq!(s.parse::<ClientChoice>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.models.push(ModelSpec {
            id: "m1".into(),
            kind: ModelFormatKind::SpanRelation,
            path: "p.jsonl".into(),
        });
        cfg.vote.threshold = Some(2);
        let text = cfg.to_resolved_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            threshold: Some(1),
            mock_script: Some("s.jsonl".into()),
            temperature: Some(0.5),
            strict_union: true,
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(cfg.vote.threshold, Some(1));
        assert_eq!(cfg.client.as_deref(), Some("mock:s.jsonl"));
        assert_eq!(cfg.prompt.temperature, 0.5);
        assert!(cfg.strict_union);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("colour = 1").is_err());
    }
}
