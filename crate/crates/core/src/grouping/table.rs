//! Articulation-point table mapping each Arabic letter to a group.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// The 28 letters of the Arabic alphabet.
pub const ARABIC_LETTERS: [char; 28] = [
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف', 'ق', 'ك', 'ل',
    'م', 'ن', 'ه', 'و', 'ي',
];

/// Group names of the default table, in group-index order.
pub const ARTICULATION_GROUPS: [&str; 6] = ["Aqsa-lessan", "Halq", "Jouf", "Shafatan", "Thanaya1", "Thanaya2"];

const DEFAULT_MEMBERS: [&str; 6] = ["قكجشضلنر", "هعحغخ", "اوي", "فبم", "طدتثذظ", "صزس"];

/// Letter → group name, plus the order in which groups are indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticGroupTable {
    pub group_names: Vec<String>,
    pub letters: BTreeMap<char, String>,
}

impl Default for StaticGroupTable {
    fn default() -> Self {
        let letters = ARTICULATION_GROUPS
            .iter()
            .zip(DEFAULT_MEMBERS)
            .flat_map(|(g, members)| members.chars().map(move |c| (c, g.to_string())))
            .collect();
        Self { group_names: ARTICULATION_GROUPS.iter().map(|s| s.to_string()).collect(), letters }
    }
}

impl StaticGroupTable {
    /// Parses `letter<TAB>group_name` lines. Blank lines and lines starting
    /// with `#` are ignored; groups are indexed in order of first mention.
    pub fn parse(text: &str) -> Result<Self> {
        let mut group_names: Vec<String> = Vec::new();
        let mut letters = BTreeMap::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (letter, group) = line.split_once('\t').ok_or_else(|| Error::InvalidRow {
                row,
                reason: "expected `letter<TAB>group`".into(),
            })?;
            let mut chars = letter.trim().chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::InvalidRow { row, reason: format!("`{letter}` is not a single letter") });
            };
            let group = group.trim().to_string();
            if !group_names.contains(&group) {
                group_names.push(group.clone());
            }
            if letters.insert(c, group).is_some() {
                return Err(Error::InvalidRow { row, reason: format!("letter {c} listed twice") });
            }
        }
        Ok(Self { group_names, letters })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.group_names {
            for (c, _) in self.letters.iter().filter(|(_, name)| *name == g) {
                out.push_str(&format!("{c}\t{g}\n"));
            }
        }
        out
    }

    pub fn group_of_letter(&self, c: char) -> Option<&str> {
        self.letters.get(&c).map(String::as_str)
    }
}

/// The letter a class label belongs to: the label itself for single-letter
/// classes, or the parenthesized suffix of word classes (`word (letter)`).
pub fn letter_of(label: &str) -> Option<char> {
    let label = label.trim();
    let mut chars = label.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        return Some(c);
    }
    let inner = label.strip_suffix(')')?.rsplit_once('(')?.1.trim();
    let mut chars = inner.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}
