//! Core of the PerspectivesX tool provider: activity templates, perspective
//! assignment, contributions and curation, the lineage knowledge base, topic
//! modelling, LTI 1.1 launch and outcome handling, and the persistent store.

pub mod assignment;
pub mod blob;
pub mod clock;
pub mod config;
pub mod curation;
pub mod error;
pub mod ids;
pub mod kb;
pub mod lti;
pub mod model;
pub mod moderation;
pub mod passback;
pub mod service;
pub mod store;
pub mod submissions;
pub mod topics;

pub use assignment::AssignmentRecord;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{load_config, ServiceConfig};
pub use curation::{CurationEntry, CurationTask};
pub use error::{Error, Result};
pub use ids::*;
pub use kb::{KbEntry, KbPage, KbQuery, Related, Tokenizer};
pub use lti::{LaunchRequest, LtiSession};
pub use model::{
    Activity, ActivityConfig, ActivityTemplate, ContributionPolicy, CourseContext, CourseMode, ItemKind,
    KbSharingDefault, PerspectiveSpec,
};
pub use moderation::{Highlight, ParticipationScore};
pub use passback::{DispatchReport, OutcomeTransport, PassbackJob, PassbackStatus, TransportError};
pub use service::{Service, ServiceOptions};
pub use submissions::{Contribution, ContributionItem, DisplayIdentity, Role, Sharing, Viewer};
pub use topics::{TopicModel, TopicSummary};
