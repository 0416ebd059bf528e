use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure a primary operation can report.
///
/// Variant names double as the stable wire codes returned by the REST API
/// (see [`Error::code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // templates and activities
    #[error("template has no perspectives")]
    EmptyTemplate,
    #[error("duplicate perspective name `{0}`")]
    DuplicatePerspectiveName(String),
    #[error("opposing perspective reference is dangling or asymmetric: {0}")]
    DanglingOpposition(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("invalid activity configuration: {0}")]
    InvalidConfig(String),
    #[error("lineage `{0}` is already used in this course run")]
    DuplicateLineageInRun(String),
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    // assignment
    #[error("unknown perspective `{0}`")]
    UnknownPerspective(String),
    #[error("this activity requires the learner to select a perspective")]
    SelectionRequired,
    #[error("a perspective may only be selected under the SELECT policy")]
    SelectionForbidden,

    // submissions
    #[error("learner is not assigned to this perspective")]
    NotAssigned,
    #[error("item kind {0} is not allowed for this perspective")]
    KindNotAllowed(String),
    #[error("a contribution needs at least one item")]
    EmptyItems,
    #[error("private contributions are disabled for this activity")]
    PrivateForbidden,
    #[error("at most {0} tags are allowed")]
    TooManyTags(usize),
    #[error("invalid item: {0}")]
    InvalidItem(String),
    #[error("contribution is not visible to this viewer")]
    NotVisible,
    #[error("unknown contribution `{0}`")]
    UnknownContribution(String),

    // curation
    #[error("curation is disabled for this activity")]
    CurationDisabled,
    #[error("learners cannot curate their own contributions")]
    SelfCuration,
    #[error("source contribution is not visible to the curator")]
    SourceNotVisible,
    #[error("source contribution covers a perspective the curator does not curate")]
    WrongPerspective,
    #[error("contribution has already been curated by this learner")]
    DuplicateCuration,

    // knowledge base
    #[error("page limit must be between 1 and 100, got {0}")]
    BadPage(usize),
    #[error("unknown lineage `{0}`")]
    UnknownLineage(String),

    // moderation
    #[error("operation requires a staff role")]
    Forbidden,
    #[error("private contributions cannot be highlighted")]
    CannotHighlightPrivate,

    // topics
    #[error("no shared contribution with text in this lineage")]
    EmptyCorpus,
    #[error("need at least {needed} documents, have {have}")]
    TooFewDocs { needed: usize, have: usize },
    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(String),
    #[error("top_n must be between 1 and the vocabulary size ({0})")]
    BadTopN(usize),
    #[error("unknown topic {0}")]
    UnknownTopic(usize),
    #[error("unknown topic model `{0}`")]
    UnknownModel(String),
    #[error("a training job is already running for lineage `{0}`")]
    TrainingInProgress(String),

    // lti
    #[error("unknown consumer key")]
    UnknownConsumer,
    #[error("OAuth signature does not verify")]
    BadSignature,
    #[error("oauth_timestamp is outside the accepted window")]
    StaleTimestamp,
    #[error("nonce has already been used")]
    ReplayedNonce,
    #[error("malformed launch: {0}")]
    MalformedLaunch(String),
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("malformed outcome message: {0}")]
    MalformedOutcome(String),
    #[error("session is missing or expired")]
    Unauthenticated,
    #[error("too many requests for this session")]
    RateLimited,
    #[error("consumer key `{0}` already exists")]
    DuplicateConsumer(String),

    // configuration and storage
    #[error("missing configuration key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("cannot read `{path}`: {reason}")]
    UnreadableFile { path: String, reason: String },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl Error {
    /// Stable machine-readable code, identical to the variant name.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            EmptyTemplate => "EmptyTemplate",
            DuplicatePerspectiveName(_) => "DuplicatePerspectiveName",
            DanglingOpposition(_) => "DanglingOpposition",
            UnknownTemplate(_) => "UnknownTemplate",
            InvalidConfig(_) => "InvalidConfig",
            DuplicateLineageInRun(_) => "DuplicateLineageInRun",
            UnknownActivity(_) => "UnknownActivity",
            InvalidInput(_) => "InvalidInput",
            UnknownPerspective(_) => "UnknownPerspective",
            SelectionRequired => "SelectionRequired",
            SelectionForbidden => "SelectionForbidden",
            NotAssigned => "NotAssigned",
            KindNotAllowed(_) => "KindNotAllowed",
            EmptyItems => "EmptyItems",
            PrivateForbidden => "PrivateForbidden",
            TooManyTags(_) => "TooManyTags",
            InvalidItem(_) => "InvalidItem",
            NotVisible => "NotVisible",
            UnknownContribution(_) => "UnknownContribution",
            CurationDisabled => "CurationDisabled",
            SelfCuration => "SelfCuration",
            SourceNotVisible => "SourceNotVisible",
            WrongPerspective => "WrongPerspective",
            DuplicateCuration => "DuplicateCuration",
            BadPage(_) => "BadPage",
            UnknownLineage(_) => "UnknownLineage",
            Forbidden => "Forbidden",
            CannotHighlightPrivate => "CannotHighlightPrivate",
            EmptyCorpus => "EmptyCorpus",
            TooFewDocs { .. } => "TooFewDocs",
            BadHyperparameter(_) => "BadHyperparameter",
            BadTopN(_) => "BadTopN",
            UnknownTopic(_) => "UnknownTopic",
            UnknownModel(_) => "UnknownModel",
            TrainingInProgress(_) => "TrainingInProgress",
            UnknownConsumer => "UnknownConsumer",
            BadSignature => "BadSignature",
            StaleTimestamp => "StaleTimestamp",
            ReplayedNonce => "ReplayedNonce",
            MalformedLaunch(_) => "MalformedLaunch",
            ScoreOutOfRange(_) => "ScoreOutOfRange",
            MalformedOutcome(_) => "MalformedOutcome",
            Unauthenticated => "Unauthenticated",
            RateLimited => "RateLimited",
            DuplicateConsumer(_) => "DuplicateConsumer",
            MissingKey(_) => "MissingKey",
            InvalidValue { .. } => "InvalidValue",
            UnreadableFile { .. } => "UnreadableFile",
            Storage(_) => "Storage",
        }
    }
}
