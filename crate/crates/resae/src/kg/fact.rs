//! Statement parsing, vocabularies, and inverse augmentation.
//!
//! A statement file is UTF-8 text, one fact per line:
//! `subject<D>relation<D>object[<D>qual_relation<D>qual_value]*` with
//! delimiter `D` (comma by default, tab supported). Qualifier pairs keep
//! their file order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{ResaeError, Result};

pub const LOOP_RELATION_LABEL: &str = "__loop__";
pub const PAD_RELATION_LABEL: &str = "__pad_relation__";
pub const PAD_ENTITY_LABEL: &str = "__pad_entity__";
pub const INVERSE_PREFIX: &str = "__inv__";

/// Edge direction in the message-passing graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
    Loop,
}

/// One label-level statement, straight out of a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawStatement {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub qualifiers: Vec<(String, String)>,
}

/// One id-level statement: main triple plus ordered qualifier pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HyperFact {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub qualifiers: Vec<(usize, usize)>,
}

/// Parse a statement file. Blank lines are skipped; structural problems
/// report the 1-based line number.
pub fn parse_statements(path: &Path, delimiter: char) -> Result<Vec<RawStatement>> {
    let bytes = fs::read(path).map_err(|e| ResaeError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| ResaeError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("not valid UTF-8: {}", e),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).collect();
        if fields.len() < 3 {
            return Err(ResaeError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected at least 3 fields, got {}", fields.len()),
            });
        }
        if !(fields.len() - 3).is_multiple_of(2) {
            return Err(ResaeError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "dangling qualifier relation without a value".into(),
            });
        }
        let qualifiers = fields[3..]
            .chunks(2)
            .map(|pair| (pair[0].to_string(), pair[1].to_string()))
            .collect();
        out.push(RawStatement {
            subject: fields[0].to_string(),
            relation: fields[1].to_string(),
            object: fields[2].to_string(),
            qualifiers,
        });
    }
    Ok(out)
}

/// Render statements back into file form; the inverse of [`parse_statements`]
/// on well-formed input.
pub fn serialize_statements(statements: &[RawStatement], delimiter: char) -> String {
    let mut out = String::new();
    for s in statements {
        out.push_str(&s.subject);
        out.push(delimiter);
        out.push_str(&s.relation);
        out.push(delimiter);
        out.push_str(&s.object);
        for (qr, qv) in &s.qualifiers {
            out.push(delimiter);
            out.push_str(qr);
            out.push(delimiter);
            out.push_str(qv);
        }
        out.push('\n');
    }
    out
}

/// Bidirectional label/index maps for entities and relations.
///
/// Relation ids are laid out as `real..., inverse..., loop, pad`; entity ids
/// as `real..., pad`. Ids are assigned in first-seen order over the input
/// statements, so a fixed corpus always yields the same vocabulary.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    n_real_entities: usize,
    n_real_relations: usize,
}

impl Vocabulary {
    pub fn build(statements: &[RawStatement]) -> Result<Self> {
        if statements.is_empty() {
            return Err(ResaeError::Data("cannot build vocabulary from empty statement list".into()));
        }
        let mut entity_labels: Vec<String> = Vec::new();
        let mut relation_labels: Vec<String> = Vec::new();
        let mut seen_e = std::collections::HashSet::new();
        let mut seen_r = std::collections::HashSet::new();
        let push_e = |label: &str, out: &mut Vec<String>, seen: &mut std::collections::HashSet<String>| {
            if seen.insert(label.to_string()) {
                out.push(label.to_string());
            }
        };
        for s in statements {
            push_e(&s.subject, &mut entity_labels, &mut seen_e);
            if seen_r.insert(s.relation.clone()) {
                relation_labels.push(s.relation.clone());
            }
            push_e(&s.object, &mut entity_labels, &mut seen_e);
            for (qr, qv) in &s.qualifiers {
                if seen_r.insert(qr.clone()) {
                    relation_labels.push(qr.clone());
                }
                push_e(qv, &mut entity_labels, &mut seen_e);
            }
        }
        for label in relation_labels
            .iter()
            .chain(entity_labels.iter())
        {
            if label == LOOP_RELATION_LABEL
                || label == PAD_RELATION_LABEL
                || label == PAD_ENTITY_LABEL
                || label.starts_with(INVERSE_PREFIX)
            {
                return Err(ResaeError::Data(format!(
                    "label {:?} collides with a reserved synthetic symbol",
                    label
                )));
            }
        }
        let n_real_relations = relation_labels.len();
        let inverses: Vec<String> = relation_labels
            .iter()
            .map(|l| format!("{}{}", INVERSE_PREFIX, l))
            .collect();
        relation_labels.extend(inverses);
        relation_labels.push(LOOP_RELATION_LABEL.to_string());
        relation_labels.push(PAD_RELATION_LABEL.to_string());
        let n_real_entities = entity_labels.len();
        entity_labels.push(PAD_ENTITY_LABEL.to_string());
        let entity_index = entity_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let relation_index = relation_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(Vocabulary {
            entity_labels,
            relation_labels,
            entity_index,
            relation_index,
            n_real_entities,
            n_real_relations,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn n_real_entities(&self) -> usize {
        self.n_real_entities
    }

    pub fn n_real_relations(&self) -> usize {
        self.n_real_relations
    }

    pub fn pad_entity(&self) -> usize {
        self.entity_labels.len() - 1
    }

    pub fn loop_relation(&self) -> usize {
        2 * self.n_real_relations
    }

    pub fn pad_relation(&self) -> usize {
        2 * self.n_real_relations + 1
    }

    pub fn entity_label(&self, id: usize) -> &str {
        &self.entity_labels[id]
    }

    pub fn relation_label(&self, id: usize) -> &str {
        &self.relation_labels[id]
    }

    pub fn entity_id(&self, label: &str) -> Option<usize> {
        self.entity_index.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<usize> {
        self.relation_index.get(label).copied()
    }

    pub fn is_inverse(&self, rel: usize) -> bool {
        (self.n_real_relations..2 * self.n_real_relations).contains(&rel)
    }

    /// The inverse counterpart of a real or inverse relation; loop and pad
    /// have none.
    pub fn inverse(&self, rel: usize) -> Option<usize> {
        if rel < self.n_real_relations {
            Some(rel + self.n_real_relations)
        } else if rel < 2 * self.n_real_relations {
            Some(rel - self.n_real_relations)
        } else {
            None
        }
    }

    pub fn direction_of(&self, rel: usize) -> Direction {
        if rel < self.n_real_relations {
            Direction::Forward
        } else if self.is_inverse(rel) {
            Direction::Inverse
        } else {
            Direction::Loop
        }
    }

    /// Relation rows that take part in the relation update (everything but pad).
    pub fn participating_relations(&self) -> Vec<usize> {
        (0..self.loop_relation() + 1).collect()
    }

    fn resolve(&self, raw: &RawStatement) -> Result<HyperFact> {
        let lookup_e = |label: &str| {
            self.entity_id(label)
                .ok_or_else(|| ResaeError::Data(format!("entity {:?} not in vocabulary", label)))
        };
        let lookup_r = |label: &str| {
            self.relation_id(label)
                .ok_or_else(|| ResaeError::Data(format!("relation {:?} not in vocabulary", label)))
        };
        let mut qualifiers = Vec::with_capacity(raw.qualifiers.len());
        for (qr, qv) in &raw.qualifiers {
            qualifiers.push((lookup_r(qr)?, lookup_e(qv)?));
        }
        Ok(HyperFact {
            subject: lookup_e(&raw.subject)?,
            relation: lookup_r(&raw.relation)?,
            object: lookup_e(&raw.object)?,
            qualifiers,
        })
    }

    pub fn resolve_all(&self, raws: &[RawStatement]) -> Result<Vec<HyperFact>> {
        raws.iter().map(|r| self.resolve(r)).collect()
    }

    pub fn fact_to_raw(&self, fact: &HyperFact) -> RawStatement {
        RawStatement {
            subject: self.entity_labels[fact.subject].clone(),
            relation: self.relation_labels[fact.relation].clone(),
            object: self.entity_labels[fact.object].clone(),
            qualifiers: fact
                .qualifiers
                .iter()
                .map(|(qr, qv)| {
                    (
                        self.relation_labels[*qr].clone(),
                        self.entity_labels[*qv].clone(),
                    )
                })
                .collect(),
        }
    }
}

/// Mirror every fact: `(s, r, o, Q)` additionally becomes `(o, r⁻¹, s, Q)`
/// with qualifiers copied verbatim. Facts already carrying inverse relations
/// are rejected to guard against double inversion.
pub fn add_inverse_facts(facts: &[HyperFact], vocab: &Vocabulary) -> Result<Vec<HyperFact>> {
    let mut out = Vec::with_capacity(facts.len() * 2);
    for fact in facts {
        if fact.relation >= vocab.n_real_relations() {
            return Err(ResaeError::Data(format!(
                "fact already uses non-forward relation {:?}",
                vocab.relation_label(fact.relation)
            )));
        }
        let inverse = vocab
            .inverse(fact.relation)
            .expect("real relation always has an inverse");
        out.push(fact.clone());
        out.push(HyperFact {
            subject: fact.object,
            relation: inverse,
            object: fact.subject,
            qualifiers: fact.qualifiers.clone(),
        });
    }
    Ok(out)
}

/// Train/valid/test splits plus the vocabulary they resolve against.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<HyperFact>,
    pub valid: Vec<HyperFact>,
    pub test: Vec<HyperFact>,
    pub vocab: Vocabulary,
}

impl Dataset {
    /// Parse the three split files (valid/test may be absent) and build the
    /// vocabulary in train, valid, test order.
    pub fn load(
        train: &Path,
        valid: Option<&Path>,
        test: Option<&Path>,
        delimiter: char,
    ) -> Result<Self> {
        let train_raw = parse_statements(train, delimiter)?;
        let valid_raw = match valid {
            Some(p) => parse_statements(p, delimiter)?,
            None => Vec::new(),
        };
        let test_raw = match test {
            Some(p) => parse_statements(p, delimiter)?,
            None => Vec::new(),
        };
        let mut all = train_raw.clone();
        all.extend(valid_raw.iter().cloned());
        all.extend(test_raw.iter().cloned());
        let vocab = Vocabulary::build(&all)?;
        Ok(Dataset {
            train: vocab.resolve_all(&train_raw)?,
            valid: vocab.resolve_all(&valid_raw)?,
            test: vocab.resolve_all(&test_raw)?,
            vocab,
        })
    }

    pub fn all_facts(&self) -> impl Iterator<Item = &HyperFact> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_statement_with_one_qualifier() {
        let f = write_tmp("GeorgeMiller,nominated_for,AcademyAward_BestAnimated,for_work,HappyFeet\n");
        let parsed = parse_statements(f.path(), ',').unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].subject, "GeorgeMiller");
        assert_eq!(parsed[0].relation, "nominated_for");
        assert_eq!(parsed[0].object, "AcademyAward_BestAnimated");
        assert_eq!(
            parsed[0].qualifiers,
            vec![("for_work".to_string(), "HappyFeet".to_string())]
        );
    }

    #[test]
    fn parses_bare_triple_and_skips_blank_lines() {
        let f = write_tmp("a,r,b\n\n\nc,r,d\n");
        let parsed = parse_statements(f.path(), ',').unwrap();
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].qualifiers.is_empty());
    }

    #[test]
    fn dangling_qualifier_is_an_error_with_line_number() {
        let f = write_tmp("a,r,b\na,r,b,q1\n");
        let err = parse_statements(f.path(), ',').unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "missing line number: {}", msg);
        assert!(msg.contains("dangling"), "wrong message: {}", msg);
    }

    #[test]
    fn too_few_fields_is_an_error() {
        let f = write_tmp("a,r\n");
        let err = parse_statements(f.path(), ',').unwrap_err();
        assert!(err.to_string().contains("at least 3 fields"));
    }

    #[test]
    fn non_utf8_is_a_decode_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&[0xff, 0xfe, b'a', b',', b'r', b',', b'b']).unwrap();
        let err = parse_statements(f.path(), ',').unwrap_err();
        assert!(err.to_string().contains("UTF-8"));
    }

    #[test]
    fn tab_delimiter_is_supported() {
        let f = write_tmp("a\tr\tb\tq\tv\n");
        let parsed = parse_statements(f.path(), '\t').unwrap();
        assert_eq!(parsed[0].qualifiers.len(), 1);
    }

    #[test]
    fn parse_serialize_parse_round_trips() {
        let f = write_tmp("a,r,b,q1,v1,q2,v2\nc,r2,d\n");
        let parsed = parse_statements(f.path(), ',').unwrap();
        let rendered = serialize_statements(&parsed, ',');
        let f2 = write_tmp(&rendered);
        assert_eq!(parse_statements(f2.path(), ',').unwrap(), parsed);
    }

    fn toy_statements() -> Vec<RawStatement> {
        parse_statements(
            write_tmp("a,r1,b\nb,r2,c,r1,a\na,r1,c\n").path(),
            ',',
        )
        .unwrap()
    }

    #[test]
    fn two_relations_give_vocab_of_six() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        assert_eq!(vocab.n_real_relations(), 2);
        assert_eq!(vocab.n_relations(), 6); // 2 real + 2 inverse + loop + pad
        assert_eq!(vocab.n_entities(), 4); // a, b, c + pad
    }

    #[test]
    fn duplicate_labels_get_one_id() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        assert_eq!(vocab.entity_id("a"), Some(0));
        assert_eq!(vocab.relation_id("r1"), Some(0));
    }

    #[test]
    fn inverse_mapping_is_an_involution() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        for r in 0..vocab.n_real_relations() {
            let inv = vocab.inverse(r).unwrap();
            assert_eq!(vocab.inverse(inv), Some(r));
        }
        assert_eq!(vocab.inverse(vocab.loop_relation()), None);
        assert_eq!(vocab.inverse(vocab.pad_relation()), None);
    }

    #[test]
    fn label_index_maps_are_mutually_inverse() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        for id in 0..vocab.n_relations() {
            assert_eq!(vocab.relation_id(vocab.relation_label(id)), Some(id));
        }
        for id in 0..vocab.n_entities() {
            assert_eq!(vocab.entity_id(vocab.entity_label(id)), Some(id));
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(Vocabulary::build(&[]).is_err());
    }

    #[test]
    fn reserved_labels_are_rejected() {
        let raws = vec![RawStatement {
            subject: "a".into(),
            relation: "__loop__".into(),
            object: "b".into(),
            qualifiers: vec![],
        }];
        assert!(Vocabulary::build(&raws).is_err());
    }

    #[test]
    fn inverse_augmentation_mirrors_each_fact() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        let facts = vocab.resolve_all(&toy_statements()).unwrap();
        let doubled = add_inverse_facts(&facts, &vocab).unwrap();
        assert_eq!(doubled.len(), 2 * facts.len());
        let mirrored = &doubled[1];
        assert_eq!(mirrored.subject, facts[0].object);
        assert_eq!(mirrored.object, facts[0].subject);
        assert_eq!(mirrored.relation, vocab.inverse(facts[0].relation).unwrap());
        assert_eq!(mirrored.qualifiers, facts[0].qualifiers);
    }

    #[test]
    fn inverse_augmentation_of_empty_list_is_empty() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        assert!(add_inverse_facts(&[], &vocab).unwrap().is_empty());
    }

    #[test]
    fn double_inversion_is_rejected() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        let facts = vocab.resolve_all(&toy_statements()).unwrap();
        let doubled = add_inverse_facts(&facts, &vocab).unwrap();
        assert!(add_inverse_facts(&doubled, &vocab).is_err());
    }

    #[test]
    fn stripping_inverses_recovers_the_original_multiset() {
        let vocab = Vocabulary::build(&toy_statements()).unwrap();
        let facts = vocab.resolve_all(&toy_statements()).unwrap();
        let doubled = add_inverse_facts(&facts, &vocab).unwrap();
        let forward_only: Vec<HyperFact> = doubled
            .into_iter()
            .filter(|f| f.relation < vocab.n_real_relations())
            .collect();
        assert_eq!(forward_only, facts);
    }
}
