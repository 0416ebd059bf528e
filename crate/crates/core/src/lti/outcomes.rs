//! LTI 1.1 Basic Outcomes (POX) replaceResult messages.

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};

pub const CONTENT_TYPE: &str = "application/xml";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeMessage {
    pub message_id: String,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

/// Up to four decimals, trailing zeros trimmed; 0 and 1 render bare.
pub fn format_score(score: f64) -> Result<String> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::ScoreOutOfRange(score));
    }
    let score = if score == 0.0 { 0.0 } else { score };
    let fixed = format!("{score:.4}");
    Ok(fixed.trim_end_matches('0').trim_end_matches('.').to_owned())
}

pub fn build_replace_result(sourcedid: &str, score: f64) -> Result<OutcomeMessage> {
    build_replace_result_with_id(sourcedid, score, &uuid::Uuid::new_v4().to_string())
}

pub fn build_replace_result_with_id(sourcedid: &str, score: f64, message_id: &str) -> Result<OutcomeMessage> {
    let text = format_score(score)?;
    let body = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<imsx_POXEnvelopeRequest xmlns="http://www.imsglobal.org/services/ltiv1p1/xsd/imsoms_v1p0">
  <imsx_POXHeader>
    <imsx_POXRequestHeaderInfo>
      <imsx_version>V1.0</imsx_version>
      <imsx_messageIdentifier>{id}</imsx_messageIdentifier>
    </imsx_POXRequestHeaderInfo>
  </imsx_POXHeader>
  <imsx_POXBody>
    <replaceResultRequest>
      <resultRecord>
        <sourcedGUID>
          <sourcedId>{sid}</sourcedId>
        </sourcedGUID>
        <result>
          <resultScore>
            <language>en</language>
            <textString>{text}</textString>
          </resultScore>
        </result>
      </resultRecord>
    </replaceResultRequest>
  </imsx_POXBody>
</imsx_POXEnvelopeRequest>
"#,
        id = escape(message_id),
        sid = escape(sourcedid),
    );
    Ok(OutcomeMessage {
        message_id: message_id.to_owned(),
        content_type: CONTENT_TYPE,
        body: body.into_bytes(),
    })
}

/// Collects the text content of the named leaf elements, keyed by local name.
fn leaf_texts(body: &[u8], wanted: &[&str]) -> Result<Vec<(String, String)>> {
    let mut reader = Reader::from_reader(body);
    let mut stack: Vec<String> = Vec::new();
    let mut found = Vec::new();
    let mut buf = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) => {
                stack.push(String::from_utf8_lossy(e.local_name().as_ref()).into_owned());
            }
            Ok(Event::End(_)) => {
                stack.pop();
            }
            Ok(Event::Text(t)) => {
                if let Some(name) = stack.last().filter(|n| wanted.contains(&n.as_str())) {
                    let text = t
                        .xml_content()
                        .map_err(|e| Error::MalformedOutcome(e.to_string()))?;
                    found.push((name.clone(), text.into_owned()));
                }
            }
            Ok(Event::GeneralRef(r)) => {
                // entity references arrive as separate events
                if let Some(name) = stack.last().filter(|n| wanted.contains(&n.as_str())) {
                    let raw: &[u8] = &r;
                    let ch = match raw {
                        b"amp" => "&",
                        b"lt" => "<",
                        b"gt" => ">",
                        b"quot" => "\"",
                        b"apos" => "'",
                        other => {
                            return Err(Error::MalformedOutcome(format!(
                                "unsupported entity &{};",
                                String::from_utf8_lossy(other)
                            )))
                        }
                    };
                    found.push((name.clone(), ch.to_owned()));
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(Error::MalformedOutcome(e.to_string())),
        }
        buf.clear();
    }
    // merge adjacent fragments of the same element
    let mut merged: Vec<(String, String)> = Vec::new();
    for (name, text) in found {
        match merged.last_mut() {
            Some((last, acc)) if *last == name => acc.push_str(&text),
            _ => merged.push((name, text)),
        }
    }
    Ok(merged)
}

fn field(fields: &[(String, String)], name: &str) -> Option<String> {
    fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone())
}

/// Recovers (sourcedId, score) from a replaceResult request body.
pub fn parse_replace_result(body: &[u8]) -> Result<(String, f64)> {
    let fields = leaf_texts(body, &["sourcedId", "textString"])?;
    let sid = field(&fields, "sourcedId").ok_or_else(|| Error::MalformedOutcome("no sourcedId".into()))?;
    let score = field(&fields, "textString")
        .ok_or_else(|| Error::MalformedOutcome("no textString".into()))?
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::MalformedOutcome(e.to_string()))?;
    Ok((sid, score))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeResponse {
    pub code_major: String,
    pub description: Option<String>,
}

impl OutcomeResponse {
    pub fn is_success(&self) -> bool {
        self.code_major.eq_ignore_ascii_case("success")
    }
}

/// Reads the status block of a consumer's imsx_POXEnvelopeResponse.
pub fn parse_response(body: &[u8]) -> Result<OutcomeResponse> {
    let fields = leaf_texts(body, &["imsx_codeMajor", "imsx_description"])?;
    Ok(OutcomeResponse {
        code_major: field(&fields, "imsx_codeMajor")
            .ok_or_else(|| Error::MalformedOutcome("no imsx_codeMajor".into()))?
            .trim()
            .to_owned(),
        description: field(&fields, "imsx_description"),
    })
}
