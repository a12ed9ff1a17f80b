//! Row parsers for the public archive's `Posts.xml` / `Users.xml` formats.
//!
//! Both files are flat sequences of `<row .../>` elements. A row that cannot
//! be turned into a record (missing id, missing owner, unparseable date,
//! unknown post type, ...) is counted and skipped; a stream that cannot be
//! decoded at the XML level is a fatal input error.

use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::ids::{PostId, Timestamp, UserId};
use crate::ingest::{PostType, RawPost, UserRecord};

/// Counters accumulated while scanning the two dump files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub questions: usize,
    pub answers: usize,
    pub users: usize,
    /// Rows dropped because a required attribute was missing or malformed.
    pub skipped_rows: usize,
    /// Well-formed rows with a `PostTypeId` other than question/answer
    /// (wiki pages, moderator nominations, ...).
    pub other_post_types: usize,
}

/// Parse both dump streams into raw records.
pub fn parse_dump<P: BufRead, U: BufRead>(
    posts: P,
    users: U,
) -> Result<(Vec<RawPost>, Vec<UserRecord>, ParseStats)> {
    let mut stats = ParseStats::default();
    let posts = parse_posts(posts, &mut stats)?;
    let users = parse_users(users, &mut stats)?;
    Ok((posts, users, stats))
}

pub fn parse_posts<R: BufRead>(reader: R, stats: &mut ParseStats) -> Result<Vec<RawPost>> {
    let mut out = Vec::new();
    for_each_row(reader, |row| {
        match post_from_row(row) {
            Ok(Some(post)) => {
                match post.post_type {
                    PostType::Question => stats.questions += 1,
                    PostType::Answer => stats.answers += 1,
                }
                out.push(post);
            }
            Ok(None) => stats.other_post_types += 1,
            Err(()) => stats.skipped_rows += 1,
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_users<R: BufRead>(reader: R, stats: &mut ParseStats) -> Result<Vec<UserRecord>> {
    let mut out = Vec::new();
    for_each_row(reader, |row| {
        match user_from_row(row) {
            Ok(user) => {
                stats.users += 1;
                out.push(user);
            }
            Err(()) => stats.skipped_rows += 1,
        }
        Ok(())
    })?;
    Ok(out)
}

/// Drive the XML reader, invoking `f` on every `<row>` element.
fn for_each_row<R, F>(reader: R, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(&BytesStart<'_>) -> Result<()>,
{
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    loop {
        match xml.read_event_into(&mut buf) {
            Ok(Event::Empty(e)) | Ok(Event::Start(e)) => {
                if e.name().as_ref() == b"row" {
                    f(&e)?;
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(Error::Input(format!("xml stream error: {e}"))),
        }
        buf.clear();
    }
    Ok(())
}

/// Pull a named attribute as owned text, unescaping entities.
fn attr(row: &BytesStart<'_>, name: &[u8]) -> Option<String> {
    for a in row.attributes() {
        let a = a.ok()?;
        if a.key.as_ref() == name {
            return a.unescape_value().ok().map(|v| v.into_owned());
        }
    }
    None
}

fn attr_i64(row: &BytesStart<'_>, name: &[u8]) -> Option<i64> {
    attr(row, name)?.trim().parse().ok()
}

/// `Ok(None)` means a valid row of an irrelevant post type.
/// `Err(())` means the row is malformed for our purposes and must be skipped.
fn post_from_row(row: &BytesStart<'_>) -> std::result::Result<Option<RawPost>, ()> {
    let id = PostId(attr_i64(row, b"Id").ok_or(())?);
    let post_type = match attr_i64(row, b"PostTypeId").ok_or(())? {
        1 => PostType::Question,
        2 => PostType::Answer,
        _ => return Ok(None),
    };
    // Posts without an owner cannot be attributed and are removed outright.
    let owner = UserId(attr_i64(row, b"OwnerUserId").ok_or(())?);
    let created = attr(row, b"CreationDate")
        .and_then(|s| Timestamp::parse(&s))
        .ok_or(())?;

    let parent_id = attr_i64(row, b"ParentId").map(PostId);
    if post_type == PostType::Answer && parent_id.is_none() {
        return Err(());
    }

    let tags = match post_type {
        PostType::Question => split_tags(&attr(row, b"Tags").unwrap_or_default()),
        PostType::Answer => Vec::new(),
    };

    Ok(Some(RawPost {
        id,
        post_type,
        accepted_answer_id: attr_i64(row, b"AcceptedAnswerId").map(PostId),
        parent_id,
        owner_user_id: Some(owner),
        creation_date: created,
        tags,
        title: attr(row, b"Title").unwrap_or_default(),
        body: attr(row, b"Body").unwrap_or_default(),
        score: attr_i64(row, b"Score").unwrap_or(0),
    }))
}

fn user_from_row(row: &BytesStart<'_>) -> std::result::Result<UserRecord, ()> {
    let id = UserId(attr_i64(row, b"Id").ok_or(())?);
    let reputation = attr_i64(row, b"Reputation").unwrap_or(0).max(0) as u64;
    Ok(UserRecord { id, reputation })
}

/// Split a dump tag attribute into lowercased, deduplicated tag tokens.
///
/// Handles both the classic `<rust><graphs>` encoding and the newer
/// `|rust|graphs|` encoding.
pub fn split_tags(raw: &str) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    let mut push = |tag: &str| {
        let t = tag.trim().to_lowercase();
        if !t.is_empty() && !tags.iter().any(|x| x == &t) {
            tags.push(t);
        }
    };
    if raw.contains('<') {
        let mut rest = raw;
        while let Some(open) = rest.find('<') {
            let Some(close_rel) = rest[open + 1..].find('>') else {
                break;
            };
            push(&rest[open + 1..open + 1 + close_rel]);
            rest = &rest[open + 1 + close_rel + 1..];
        }
    } else {
        for part in raw.split('|') {
            push(part);
        }
    }
    tags
}
