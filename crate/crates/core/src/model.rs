//! Activity templates, activity configuration and the built-in template
//! catalog.

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActivityId, CourseRunId, LineageKey, PerspectiveId, TemplateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemKind {
    Text,
    Media,
    Link,
}

impl ItemKind {
    pub const ALL: [ItemKind; 3] = [ItemKind::Text, ItemKind::Media, ItemKind::Link];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Text => "TEXT",
            ItemKind::Media => "MEDIA",
            ItemKind::Link => "LINK",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerspectiveSpec {
    pub id: PerspectiveId,
    pub name: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default = "all_kinds")]
    pub item_kinds_allowed: BTreeSet<ItemKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opposing_id: Option<PerspectiveId>,
}

impl PerspectiveSpec {
    pub fn new(id: impl Into<PerspectiveId>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            prompt: String::new(),
            item_kinds_allowed: ItemKind::ALL.into_iter().collect(),
            opposing_id: None,
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = prompt.into();
        self
    }

    pub fn opposing(mut self, other: impl Into<PerspectiveId>) -> Self {
        self.opposing_id = Some(other.into());
        self
    }

    pub fn kinds(mut self, kinds: impl IntoIterator<Item = ItemKind>) -> Self {
        self.item_kinds_allowed = kinds.into_iter().collect();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityTemplate {
    pub id: TemplateId,
    pub name: String,
    pub perspectives: Vec<PerspectiveSpec>,
    pub builtin: bool,
}

impl ActivityTemplate {
    /// Validates and builds a custom (non built-in) template.
    pub fn custom(
        id: TemplateId,
        name: &str,
        perspectives: Vec<PerspectiveSpec>,
    ) -> Result<Self> {
        let template = Self {
            id,
            name: name.trim().to_owned(),
            perspectives,
            builtin: false,
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidInput("template name is empty".into()));
        }
        if self.perspectives.is_empty() {
            return Err(Error::EmptyTemplate);
        }
        let mut names = HashSet::new();
        let mut ids = HashSet::new();
        for p in &self.perspectives {
            if p.name.trim().is_empty() {
                return Err(Error::InvalidInput("perspective name is empty".into()));
            }
            if p.id.as_str().is_empty() {
                return Err(Error::InvalidInput("perspective id is empty".into()));
            }
            if p.item_kinds_allowed.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "perspective `{}` allows no item kinds",
                    p.name
                )));
            }
            if !names.insert(p.name.trim().to_lowercase()) {
                return Err(Error::DuplicatePerspectiveName(p.name.clone()));
            }
            if !ids.insert(p.id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate perspective id `{}`", p.id)));
            }
        }
        for p in &self.perspectives {
            let Some(other_id) = &p.opposing_id else {
                continue;
            };
            if other_id == &p.id {
                return Err(Error::DanglingOpposition(format!("`{}` opposes itself", p.name)));
            }
            let other = self.perspective(other_id).ok_or_else(|| {
                Error::DanglingOpposition(format!("`{}` references unknown `{other_id}`", p.name))
            })?;
            if other.opposing_id.as_ref() != Some(&p.id) {
                return Err(Error::DanglingOpposition(format!(
                    "`{}` opposes `{}` but not the reverse",
                    p.name, other.name
                )));
            }
        }
        Ok(())
    }

    pub fn perspective(&self, id: &PerspectiveId) -> Option<&PerspectiveSpec> {
        self.perspectives.iter().find(|p| &p.id == id)
    }

    pub fn opposing(&self, id: &PerspectiveId) -> Option<&PerspectiveSpec> {
        self.perspective(id)?
            .opposing_id
            .as_ref()
            .and_then(|o| self.perspective(o))
    }

    pub fn perspective_ids(&self) -> Vec<PerspectiveId> {
        self.perspectives.iter().map(|p| p.id.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContributionPolicy {
    Select,
    All,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KbSharingDefault {
    Named,
    Anonymous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityConfig {
    pub contribution_policy: ContributionPolicy,
    pub curation_enabled: bool,
    #[serde(default = "default_min_curated")]
    pub min_curated_per_perspective: u32,
    pub kb_sharing_default: KbSharingDefault,
    #[serde(default = "default_true")]
    pub allow_private: bool,
    #[serde(default)]
    pub grade_passback_enabled: bool,
}

fn default_min_curated() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self {
            contribution_policy: ContributionPolicy::Select,
            curation_enabled: false,
            min_curated_per_perspective: 1,
            kb_sharing_default: KbSharingDefault::Named,
            allow_private: true,
            grade_passback_enabled: false,
        }
    }
}

impl ActivityConfig {
    pub fn validate(&self, template: &ActivityTemplate) -> Result<()> {
        if self.min_curated_per_perspective < 1 {
            return Err(Error::InvalidConfig(
                "min_curated_per_perspective must be at least 1".into(),
            ));
        }
        if self.curation_enabled && template.perspectives.len() < 2 {
            return Err(Error::InvalidConfig(
                "curation needs a template with at least two perspectives".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CourseMode {
    Paced,
    SelfPaced,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseContext {
    pub course_run_id: CourseRunId,
    pub lti_context_id: String,
    pub title: String,
    pub mode: CourseMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub id: ActivityId,
    pub template_id: TemplateId,
    pub config: ActivityConfig,
    pub course_run_id: CourseRunId,
    pub lineage_key: LineageKey,
    pub created_at: DateTime<Utc>,
    /// Seed for RANDOM assignment, drawn once at creation.
    pub assignment_seed: u64,
}

fn all_kinds() -> BTreeSet<ItemKind> {
    ItemKind::ALL.into_iter().collect()
}

fn builtin(id: &str, name: &str, perspectives: &[(&str, &str, &str, Option<&str>)]) -> ActivityTemplate {
    ActivityTemplate {
        id: TemplateId::new(id),
        name: name.to_owned(),
        perspectives: perspectives
            .iter()
            .map(|(pid, pname, prompt, opposing)| PerspectiveSpec {
                id: PerspectiveId::new(*pid),
                name: (*pname).to_owned(),
                prompt: (*prompt).to_owned(),
                item_kinds_allowed: all_kinds(),
                opposing_id: opposing.map(PerspectiveId::new),
            })
            .collect(),
        builtin: true,
    }
}

/// The templates shipped with the tool. Ids are fixed so they survive
/// restarts and can be referenced from LTI custom parameters.
pub fn builtin_templates() -> Vec<ActivityTemplate> {
    vec![
        builtin(
            "builtin-swot",
            "SWOT",
            &[
                ("swot-strengths", "Strengths", "What advantages or strengths do you see?", Some("swot-weaknesses")),
                ("swot-weaknesses", "Weaknesses", "What weaknesses or disadvantages do you see?", Some("swot-strengths")),
                ("swot-opportunities", "Opportunities", "What opportunities could be exploited?", Some("swot-threats")),
                ("swot-threats", "Threats", "What threats or risks could cause trouble?", Some("swot-opportunities")),
            ],
        ),
        builtin(
            "builtin-six-thinking-hats",
            "Six Thinking Hats",
            &[
                ("hats-white", "White", "Facts and information: what do we know?", None),
                ("hats-red", "Red", "Feelings and intuition: what is your gut reaction?", None),
                ("hats-black", "Black", "Caution: what could go wrong?", None),
                ("hats-yellow", "Yellow", "Optimism: what are the benefits?", None),
                ("hats-green", "Green", "Creativity: what alternatives are possible?", None),
                ("hats-blue", "Blue", "Process: how should the thinking be organised?", None),
            ],
        ),
        builtin(
            "builtin-scamper",
            "SCAMPER",
            &[
                ("scamper-substitute", "Substitute", "What could be substituted?", None),
                ("scamper-combine", "Combine", "What could be combined?", None),
                ("scamper-adapt", "Adapt", "What could be adapted from elsewhere?", None),
                ("scamper-modify", "Modify", "What could be modified, magnified or minified?", None),
                ("scamper-put-to-another-use", "Put to another use", "How else could it be used?", None),
                ("scamper-eliminate", "Eliminate", "What could be removed?", None),
                ("scamper-reverse", "Reverse", "What could be reversed or rearranged?", None),
            ],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(t: &ActivityTemplate) -> Vec<&str> {
        t.perspectives.iter().map(|p| p.name.as_str()).collect()
    }

    fn by_name<'a>(all: &'a [ActivityTemplate], name: &str) -> &'a ActivityTemplate {
        all.iter().find(|t| t.name == name).unwrap()
    }

    #[test]
    fn builtin_catalog() {
        let all = builtin_templates();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|t| t.builtin && t.validate().is_ok()));

        let swot = by_name(&all, "SWOT");
        assert_eq!(names(swot), ["Strengths", "Weaknesses", "Opportunities", "Threats"]);
        let s = PerspectiveId::new("swot-strengths");
        let o = PerspectiveId::new("swot-opportunities");
        assert_eq!(swot.opposing(&s).unwrap().name, "Weaknesses");
        assert_eq!(swot.opposing(&o).unwrap().name, "Threats");

        let hats = by_name(&all, "Six Thinking Hats");
        assert_eq!(names(hats), ["White", "Red", "Black", "Yellow", "Green", "Blue"]);

        let scamper = by_name(&all, "SCAMPER");
        assert_eq!(
            names(scamper),
            ["Substitute", "Combine", "Adapt", "Modify", "Put to another use", "Eliminate", "Reverse"]
        );

        assert_eq!(all, builtin_templates());
    }

    #[test]
    fn opposition_is_an_involution() {
        for t in builtin_templates() {
            for p in &t.perspectives {
                if let Some(o) = t.opposing(&p.id) {
                    assert_eq!(t.opposing(&o.id).unwrap().id, p.id);
                }
            }
        }
    }

    #[test]
    fn custom_template_validation() {
        let ok = ActivityTemplate::custom(
            TemplateId::new("t"),
            "Pros/Cons",
            vec![
                PerspectiveSpec::new("pros", "Pros").opposing("cons"),
                PerspectiveSpec::new("cons", "Cons").opposing("pros"),
            ],
        )
        .unwrap();
        assert_eq!(ok.perspectives.len(), 2);
        assert!(!ok.builtin);

        assert_eq!(
            ActivityTemplate::custom(TemplateId::new("x"), "X", vec![]),
            Err(Error::EmptyTemplate)
        );

        let asym = ActivityTemplate::custom(
            TemplateId::new("s"),
            "SWOT-custom",
            vec![
                PerspectiveSpec::new("s", "S").opposing("w"),
                PerspectiveSpec::new("w", "W"),
                PerspectiveSpec::new("o", "O"),
                PerspectiveSpec::new("t", "T"),
            ],
        );
        assert!(matches!(asym, Err(Error::DanglingOpposition(_))));

        let dangling = ActivityTemplate::custom(
            TemplateId::new("d"),
            "D",
            vec![PerspectiveSpec::new("a", "A").opposing("nope")],
        );
        assert!(matches!(dangling, Err(Error::DanglingOpposition(_))));

        let dup = ActivityTemplate::custom(
            TemplateId::new("d"),
            "D",
            vec![PerspectiveSpec::new("a", "Idea"), PerspectiveSpec::new("b", "idea")],
        );
        assert!(matches!(dup, Err(Error::DuplicatePerspectiveName(_))));

        let no_kinds = ActivityTemplate::custom(
            TemplateId::new("k"),
            "K",
            vec![PerspectiveSpec::new("a", "A").kinds([])],
        );
        assert!(matches!(no_kinds, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn curation_needs_two_perspectives() {
        let single = ActivityTemplate::custom(
            TemplateId::new("one"),
            "Reflection",
            vec![PerspectiveSpec::new("r", "Reflection")],
        )
        .unwrap();
        let config = ActivityConfig {
            curation_enabled: true,
            ..ActivityConfig::default()
        };
        assert!(matches!(config.validate(&single), Err(Error::InvalidConfig(_))));

        let zero_min = ActivityConfig {
            min_curated_per_perspective: 0,
            ..ActivityConfig::default()
        };
        assert!(matches!(zero_min.validate(&single), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn json_field_names_are_stable() {
        let swot = &builtin_templates()[0];
        let value = serde_json::to_value(swot).unwrap();
        let p = &value["perspectives"][0];
        assert_eq!(p["name"], "Strengths");
        assert_eq!(p["opposing_id"], "swot-weaknesses");
        assert_eq!(p["item_kinds_allowed"], serde_json::json!(["TEXT", "MEDIA", "LINK"]));
        assert_eq!(value["builtin"], true);

        let config: ActivityConfig = serde_json::from_str(
            r#"{"contribution_policy":"RANDOM","curation_enabled":true,"kb_sharing_default":"ANONYMOUS"}"#,
        )
        .unwrap();
        assert_eq!(config.min_curated_per_perspective, 1);
        assert!(config.allow_private);
        assert!(!config.grade_passback_enabled);
    }
}
