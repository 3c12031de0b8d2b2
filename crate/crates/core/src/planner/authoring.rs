//! Hand-written transcripts, turned into fixture store entries.
//!
//! A transcript file holds `@key: value` header lines describing the request,
//! a `---` line, and the reply verbatim:
//!
//! ```text
//! @kind: plan
//! @prompt: a cat and a dog
//! @canvas: 16x8
//! @subprompt: cat|a ginger cat
//! @subprompt: dog|a grey dog
//! ---
//! Side by side.
//! ```
//!
//! Kinds and their keys: `recaption` (prompt), `plan` (prompt, canvas,
//! subprompt...), `entities` (caption..., target), `edit` (canvas,
//! background, discrepancy...). Repeated `caption` lines are joined with
//! newlines.

use std::path::{Path, PathBuf};

use super::{
    edit_messages, entities_messages, plan_messages, recaption_messages, ChatMessage, Discrepancy, FixtureBackend,
    RecaptionResult, Subprompt,
};
use crate::layout::Canvas;

#[derive(Debug, Clone, PartialEq)]
pub struct AuthoredTranscript {
    pub name: String,
    pub kind: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

fn one<'a>(headers: &'a [(String, String)], key: &str) -> Result<&'a str, String> {
    let mut found = headers.iter().filter(|(k, _)| k == key);
    match (found.next(), found.next()) {
        (Some((_, v)), None) => Ok(v),
        (None, _) => Err(format!("missing @{key}")),
        _ => Err(format!("@{key} given twice")),
    }
}

fn all<'a>(headers: &'a [(String, String)], key: &str) -> Vec<&'a str> {
    headers.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
}

pub fn parse_transcript(name: &str, text: &str) -> Result<AuthoredTranscript, String> {
    let (head, response) =
        text.split_once("\n---\n").ok_or_else(|| format!("{name}: no `---` line between header and reply"))?;
    let mut headers = Vec::new();
    for line in head.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .strip_prefix('@')
            .and_then(|l| l.split_once(':'))
            .ok_or_else(|| format!("{name}: header line `{line}` is not `@key: value`"))?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let err = |e: String| format!("{name}: {e}");
    let canvas = || -> Result<Canvas, String> { one(&headers, "canvas")?.parse::<Canvas>().map_err(|e| e.to_string()) };
    let kind = one(&headers, "kind").map_err(err)?.to_string();
    let messages = match kind.as_str() {
        "recaption" => recaption_messages(one(&headers, "prompt").map_err(err)?),
        "plan" => {
            let subprompts = all(&headers, "subprompt")
                .into_iter()
                .map(|s| {
                    let (p, r) = s.split_once('|').ok_or_else(|| format!("subprompt `{s}` lacks `|`"))?;
                    Ok(Subprompt::new(p.trim(), r.trim()))
                })
                .collect::<Result<Vec<_>, String>>()
                .map_err(err)?;
            let rc = RecaptionResult { user_prompt: one(&headers, "prompt").map_err(err)?.to_string(), subprompts };
            plan_messages(&rc, canvas().map_err(err)?)
        }
        "entities" => entities_messages(&all(&headers, "caption").join("\n"), one(&headers, "target").map_err(err)?),
        "edit" => {
            let ds = all(&headers, "discrepancy")
                .into_iter()
                .map(str::parse::<Discrepancy>)
                .collect::<Result<Vec<_>, String>>()
                .map_err(err)?;
            edit_messages(&ds, canvas().map_err(err)?, one(&headers, "background").map_err(err)?)
        }
        other => return Err(format!("{name}: unknown kind `{other}`")),
    };
    Ok(AuthoredTranscript { name: name.to_string(), kind, messages, response: response.to_string() })
}

/// Every `*.txt` transcript in `dir`, sorted by file name.
pub fn load_transcripts(dir: &Path) -> Result<Vec<AuthoredTranscript>, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy();
            parse_transcript(&name, &text)
        })
        .collect()
}

/// Writes each transcript into the store; returns `(name, digest)` pairs.
pub fn author_store(
    transcripts: &[AuthoredTranscript],
    store: &FixtureBackend,
) -> Result<Vec<(String, String)>, String> {
    transcripts
        .iter()
        .map(|t| Ok((t.name.clone(), store.store(&t.messages, &t.response).map_err(|e| e.to_string())?)))
        .collect()
}
