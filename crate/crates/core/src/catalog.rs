//! The 45-question catalog (topic × cognitive layer × frame) and the prompt
//! renderer.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::agents::{Answer, Ordering, PeerSummary};

/// The shipped catalog, one row per question.
pub const BUILTIN_TSV: &str = include_str!("../data/catalog.tsv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown {kind} `{value}`")]
    UnknownLabel { kind: &'static str, value: String },
    #[error("line {line}: expected 4 tab-separated fields")]
    Malformed { line: usize },
    #[error("missing header `topic\\tlayer\\tframe\\tquestion`")]
    MissingHeader,
    #[error("duplicate entry for {0}")]
    Duplicate(String),
    #[error("no question for {0}")]
    Missing(String),
    #[error("question text shared by several cells: {0}")]
    NotInjective(String),
    #[error("empty question for {0}")]
    EmptyQuestion(String),
}

macro_rules! labelled_enum {
    ($name:ident, $kind:literal, [$($variant:ident => $label:literal),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = CatalogError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label => Ok($name::$variant),)+
                    _ => Err(CatalogError::UnknownLabel { kind: $kind, value: s.into() }),
                }
            }
        }
    };
}

labelled_enum!(Topic, "topic", [
    GreenEnergy => "green_energy",
    ResponsibleAi => "responsible_ai",
    MandatoryVaccination => "mandatory_vaccination",
]);

// Declaration order is the tie-break order for hierarchies.
labelled_enum!(Layer, "layer", [
    Values => "values",
    Beliefs => "beliefs",
    Attitudes => "attitudes",
    Opinions => "opinions",
    Intentions => "intentions",
]);

labelled_enum!(Frame, "frame", [
    Moral => "moral",
    Economic => "economic",
    Sociotropic => "sociotropic",
]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PromptSpec {
    pub topic: Topic,
    pub layer: Layer,
    pub frame: Frame,
}

impl PromptSpec {
    pub const fn new(topic: Topic, layer: Layer, frame: Frame) -> Self {
        PromptSpec {
            topic,
            layer,
            frame,
        }
    }

    /// All 45 combinations, topic-major.
    pub fn all() -> impl Iterator<Item = PromptSpec> {
        Topic::ALL.iter().flat_map(|&t| {
            Layer::ALL.iter().flat_map(move |&l| {
                Frame::ALL.iter().map(move |&f| PromptSpec::new(t, l, f))
            })
        })
    }
}

impl fmt::Display for PromptSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.topic, self.layer, self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    questions: BTreeMap<PromptSpec, String>,
}

impl Catalog {
    pub fn builtin() -> Catalog {
        Catalog::parse_tsv(BUILTIN_TSV).expect("shipped catalog is valid")
    }

    /// Parse a `topic\tlayer\tframe\tquestion` table. The result must cover
    /// every combination exactly once with pairwise distinct questions.
    pub fn parse_tsv(text: &str) -> Result<Catalog, CatalogError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim_end() == "topic\tlayer\tframe\tquestion" => {}
            _ => return Err(CatalogError::MissingHeader),
        }
        let mut questions = BTreeMap::new();
        for (idx, line) in lines {
            let fields: alloc::vec::Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            let [topic, layer, frame, question] = fields[..] else {
                return Err(CatalogError::Malformed { line: idx + 1 });
            };
            let spec = PromptSpec::new(topic.parse()?, layer.parse()?, frame.parse()?);
            if question.trim().is_empty() {
                return Err(CatalogError::EmptyQuestion(format!("{spec}")));
            }
            if questions.insert(spec, String::from(question)).is_some() {
                return Err(CatalogError::Duplicate(format!("{spec}")));
            }
        }
        if let Some(spec) = PromptSpec::all().find(|s| !questions.contains_key(s)) {
            return Err(CatalogError::Missing(format!("{spec}")));
        }
        let mut seen = BTreeSet::new();
        for q in questions.values() {
            if !seen.insert(q.as_str()) {
                return Err(CatalogError::NotInjective(q.clone()));
            }
        }
        Ok(Catalog { questions })
    }

    pub fn lookup(&self, spec: PromptSpec) -> &str {
        // parse_tsv guarantees totality
        &self.questions[&spec]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PromptSpec, &str)> {
        self.questions.iter().map(|(s, q)| (*s, q.as_str()))
    }
}

/// Render the full decision prompt.
///
/// Peer lines always list the opposing share first. `ordering` only swaps the
/// two options named in the final instruction.
pub fn render_prompt(
    question: &str,
    current: Answer,
    peers: &PeerSummary,
    ordering: Ordering,
) -> String {
    let (first, second) = match ordering {
        Ordering::YesFirst => ("Yes", "No"),
        Ordering::NoFirst => ("No", "Yes"),
    };
    format!(
        "Consider the following question:\n\
         \n\
         \"{question}\"\n\
         \n\
         Previously, you answered: \"{current}\". Out of your {n} peers:\n\
         - {opposite}% answered the opposite.\n\
         - {same}% answered the same as you.\n\
         \n\
         Taking into account your peers\u{2019} responses, what is your final answer to the question?\n\
         Respond only with \"{first}\" or \"{second}\". Do not include any explanation or additional text.",
        n = peers.peer_count(),
        opposite = peers.disagree_percent(),
        same = peers.agree_percent(),
    )
}
