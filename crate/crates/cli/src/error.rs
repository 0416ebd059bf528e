use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use perspectivesx_core::Error;
use serde::Serialize;

/// JSON body of every error response.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    use Error::*;
    match e {
        Unauthenticated | UnknownConsumer | BadSignature | StaleTimestamp | ReplayedNonce => StatusCode::UNAUTHORIZED,
        Forbidden | NotVisible | SourceNotVisible | NotAssigned => StatusCode::FORBIDDEN,
        UnknownTemplate(_) | UnknownActivity(_) | UnknownContribution(_) | UnknownLineage(_) | UnknownTopic(_)
        | UnknownModel(_) => StatusCode::NOT_FOUND,
        DuplicateLineageInRun(_) | DuplicateCuration | TrainingInProgress(_) | DuplicateConsumer(_) => {
            StatusCode::CONFLICT
        }
        RateLimited => StatusCode::TOO_MANY_REQUESTS,
        InvalidInput(_) | MalformedLaunch(_) | BadPage(_) | BadTopN(_) | BadHyperparameter(_) | InvalidItem(_)
        | EmptyItems | TooManyTags(_) | ScoreOutOfRange(_) | MalformedOutcome(_) => StatusCode::BAD_REQUEST,
        EmptyTemplate | DuplicatePerspectiveName(_) | DanglingOpposition(_) | InvalidConfig(_)
        | UnknownPerspective(_) | SelectionRequired | SelectionForbidden | KindNotAllowed(_) | PrivateForbidden
        | CurationDisabled | SelfCuration | WrongPerspective | CannotHighlightPrivate | EmptyCorpus
        | TooFewDocs { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        MissingKey(_) | InvalidValue { .. } | UnreadableFile { .. } | Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        let detail = if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(code = self.0.code(), error = %self.0, "request failed");
            "internal error".to_owned()
        } else {
            self.0.to_string()
        };
        let body = ErrorBody { error: self.0.code(), detail };
        (status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
