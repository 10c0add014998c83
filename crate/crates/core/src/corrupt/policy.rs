use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorruptError;
use crate::parser::Label;
use crate::rng::stable_hash;
use crate::tokenize::RegionKind;

/// Masking kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    RandomToken,
    NodeTypeToken,
    AstSpanBudgeted,
    AstSpanFree,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RandomToken,
        Strategy::NodeTypeToken,
        Strategy::AstSpanBudgeted,
        Strategy::AstSpanFree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RandomToken => "random",
            Strategy::NodeTypeToken => "nodetype",
            Strategy::AstSpanBudgeted => "budgeted",
            Strategy::AstSpanFree => "free",
        }
    }

    pub fn uses_spans(self) -> bool {
        matches!(self, Strategy::AstSpanBudgeted | Strategy::AstSpanFree)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = CorruptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "random" | "random-token" => Strategy::RandomToken,
            "nodetype" | "node-type" | "nodetype-token" | "node-type-token" => Strategy::NodeTypeToken,
            "budgeted" | "ast-span" | "ast-span-budgeted" | "span" => Strategy::AstSpanBudgeted,
            "free" | "ast-span-free" => Strategy::AstSpanFree,
            _ => return Err(CorruptError::UnknownStrategy(s.to_string())),
        })
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = CorruptError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// What happens to one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RegionRule {
    /// Never masked.
    Exempt,
    /// Uses the policy's strategy.
    Policy,
    /// Uses a fixed strategy regardless of the policy.
    Strategy(Strategy),
}

impl RegionRule {
    pub fn resolve(self, policy: Strategy) -> Option<Strategy> {
        match self {
            RegionRule::Exempt => None,
            RegionRule::Policy => Some(policy),
            RegionRule::Strategy(s) => Some(s),
        }
    }
}

impl fmt::Display for RegionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionRule::Exempt => f.write_str("exempt"),
            RegionRule::Policy => f.write_str("policy"),
            RegionRule::Strategy(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for RegionRule {
    type Err = CorruptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exempt" => Ok(RegionRule::Exempt),
            "policy" => Ok(RegionRule::Policy),
            other => other.parse().map(RegionRule::Strategy),
        }
    }
}

impl From<RegionRule> for String {
    fn from(r: RegionRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for RegionRule {
    type Error = CorruptError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Per-region rules. Delimiter tokens are always exempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionRules {
    pub prompt: RegionRule,
    pub reasoning: RegionRule,
    pub code: RegionRule,
}

impl Default for RegionRules {
    fn default() -> Self {
        RegionRules {
            prompt: RegionRule::Exempt,
            reasoning: RegionRule::Strategy(Strategy::RandomToken),
            code: RegionRule::Policy,
        }
    }
}

impl RegionRules {
    pub fn rule(&self, kind: RegionKind) -> RegionRule {
        match kind {
            RegionKind::Prompt => self.prompt,
            RegionKind::Reasoning => self.reasoning,
            RegionKind::Code => self.code,
            RegionKind::Delimiter => RegionRule::Exempt,
        }
    }

    /// Everything masked with one strategy, no exemptions. Handy for
    /// single-region sequences.
    pub fn uniform() -> Self {
        RegionRules {
            prompt: RegionRule::Policy,
            reasoning: RegionRule::Policy,
            code: RegionRule::Policy,
        }
    }
}

/// Label → masking probability for the node-type baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeTypeTable {
    pub probs: BTreeMap<Label, f64>,
    /// Probability for tokens not covered by any listed label.
    #[serde(rename = "default")]
    pub default_prob: f64,
}

impl Default for NodeTypeTable {
    fn default() -> Self {
        let probs = [
            (Label::Assign, 0.42),
            (Label::Call, 0.42),
            (Label::IfStmt, 0.58),
            (Label::ForStmt, 0.60),
            (Label::WhileStmt, 0.60),
            (Label::ReturnStmt, 0.60),
        ]
        .into_iter()
        .collect();
        NodeTypeTable {
            probs,
            default_prob: 0.15,
        }
    }
}

impl NodeTypeTable {
    pub fn validate(&self) -> Result<(), CorruptError> {
        let bad = std::iter::once(("default".to_string(), self.default_prob))
            .chain(self.probs.iter().map(|(l, &p)| (l.to_string(), p)))
            .find(|(_, p)| !(0.0..=1.0).contains(p));
        match bad {
            Some((name, p)) => Err(CorruptError::Domain(format!(
                "node probability for {name} is {p}, outside [0, 1]"
            ))),
            None => Ok(()),
        }
    }

    pub fn probability(&self, label: Option<Label>) -> f64 {
        label
            .and_then(|l| self.probs.get(&l).copied())
            .unwrap_or(self.default_prob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionPolicy {
    pub strategy: Strategy,
    pub regions: RegionRules,
    pub node_probs: NodeTypeTable,
    /// Master seed; records derive their own seeds from it.
    pub seed: u64,
}

impl Default for CorruptionPolicy {
    fn default() -> Self {
        CorruptionPolicy::new(Strategy::AstSpanBudgeted, 0)
    }
}

impl CorruptionPolicy {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        CorruptionPolicy {
            strategy,
            regions: RegionRules::default(),
            node_probs: NodeTypeTable::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorruptError> {
        self.node_probs.validate()
    }

    /// Short identifier: strategy name plus a fingerprint of the full
    /// policy, so two outputs made under different rules never share an id.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("policy serializes");
        format!("{}-{:08x}", self.strategy, stable_hash(&json) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("ast-span".parse::<Strategy>().unwrap(), Strategy::AstSpanBudgeted);
        assert_eq!(
            "AST_SPAN_FREE".parse::<Strategy>().unwrap(),
            Strategy::AstSpanFree
        );
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn default_rules_exempt_prompt() {
        let rules = RegionRules::default();
        assert_eq!(
            rules.rule(RegionKind::Prompt).resolve(Strategy::AstSpanFree),
            None
        );
        assert_eq!(
            rules.rule(RegionKind::Reasoning).resolve(Strategy::AstSpanFree),
            Some(Strategy::RandomToken)
        );
        assert_eq!(
            rules.rule(RegionKind::Code).resolve(Strategy::AstSpanFree),
            Some(Strategy::AstSpanFree)
        );
        assert_eq!(rules.rule(RegionKind::Delimiter), RegionRule::Exempt);
    }

    #[test]
    fn policy_serializes_through_json() {
        let mut p = CorruptionPolicy::new(Strategy::NodeTypeToken, 9);
        p.regions.reasoning = RegionRule::Exempt;
        let json = serde_json::to_string(&p).unwrap();
        let back: CorruptionPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(json.contains("\"IFSTMT\":0.58"));
        assert_ne!(p.id(), CorruptionPolicy::new(Strategy::NodeTypeToken, 9).id());
    }

    #[test]
    fn table_validation() {
        let mut t = NodeTypeTable::default();
        assert!(t.validate().is_ok());
        t.probs.insert(Label::Call, 1.5);
        assert!(t.validate().is_err());
    }
}
