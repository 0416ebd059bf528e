//! Opaque identifier newtypes.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            /// A fresh random identifier.
            pub fn generate() -> Self {
                Self(uuid::Uuid::new_v4().simple().to_string())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

string_id!(TemplateId);
string_id!(PerspectiveId);
string_id!(ActivityId);
string_id!(ContributionId);
string_id!(
    /// Learners and staff share one identifier space; ids minted from LTI
    /// launches are pseudonymous hashes of (consumer key, user id).
    UserId
);
string_id!(CourseRunId);
string_id!(
    /// Shared by every run of the same activity across course re-runs.
    LineageKey
);
string_id!(ModelId);
string_id!(CurationId);
string_id!(FeedbackId);
string_id!(SessionId);
