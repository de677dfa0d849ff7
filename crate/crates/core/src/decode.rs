//! CTC decoding and error-rate scoring.
//!
//! Logits are `T × (V+1)` with the blank last. Beam search runs over
//! collapsed label prefixes, keeping for each prefix the probability of
//! paths ending in blank and in non-blank separately so that repeats merge
//! correctly.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ctc_log_prob;
use crate::nn::ops::{log_add, log_softmax_rows};
use crate::nn::Tensor;

pub const DEFAULT_BEAM: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub utterance_id: String,
    /// Token indices, never the blank.
    pub tokens: Vec<usize>,
    /// Exact log probability of the labelling.
    pub log_prob: f64,
}

fn argmax(row: &[f64]) -> usize {
    // first maximum wins
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check(logits: &Tensor) -> Result<usize> {
    if logits.shape().len() != 2 || logits.rows() == 0 {
        return Err(Error::EmptyInput("logits"));
    }
    if logits.cols() < 2 {
        return Err(Error::InvalidArgument("logits need at least one token plus blank".into()));
    }
    Ok(logits.cols() - 1)
}

/// Per-frame argmax, collapse repeats, drop blanks.
pub fn greedy_decode(logits: &Tensor) -> Result<Vec<usize>> {
    let blank = check(logits)?;
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..logits.rows() {
        let k = argmax(logits.row(t));
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct Score {
    blank: f64,
    non_blank: f64,
}

impl Score {
    const ZERO: Score = Score {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

fn rank(a: &(Vec<usize>, Score), b: &(Vec<usize>, Score)) -> Ordering {
    b.1.total().total_cmp(&a.1.total()).then_with(|| a.0.cmp(&b.0))
}

/// Final beam of a single prefix beam search of width `beam`.
fn prefix_beam_search(lp: &[f64], classes: usize, beam: usize) -> Vec<(Vec<usize>, Score)> {
    let blank = classes - 1;
    let mut beams: Vec<(Vec<usize>, Score)> = vec![(
        Vec::new(),
        Score {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    )];
    for row in lp.chunks_exact(classes) {
        let mut next: HashMap<Vec<usize>, Score> = HashMap::new();
        for (prefix, score) in &beams {
            let total = score.total();
            let e = next.entry(prefix.clone()).or_insert(Score::ZERO);
            e.blank = log_add(e.blank, total + row[blank]);
            let last = prefix.last().copied();
            for (k, &p) in row[..blank].iter().enumerate() {
                let mut ext = prefix.clone();
                ext.push(k);
                if Some(k) == last {
                    // staying on the same symbol keeps the prefix; a new
                    // emission of the repeat needs a blank in between
                    let e = next.get_mut(prefix).expect("inserted above");
                    e.non_blank = log_add(e.non_blank, score.non_blank + p);
                    let e = next.entry(ext).or_insert(Score::ZERO);
                    e.non_blank = log_add(e.non_blank, score.blank + p);
                } else {
                    let e = next.entry(ext).or_insert(Score::ZERO);
                    e.non_blank = log_add(e.non_blank, total + p);
                }
            }
        }
        let mut all: Vec<(Vec<usize>, Score)> = next.into_iter().filter(|(_, s)| s.total() > f64::NEG_INFINITY).collect();
        all.sort_by(rank);
        all.truncate(beam);
        beams = all;
    }
    beams
}

/// Prefix beam search of width `beam`.
///
/// A single search is not monotone in its width: a wider beam can prune
/// differently and end on a less probable labelling. To make widening safe,
/// the final beams of every width `1..=beam` are pooled, each candidate is
/// rescored exactly with the CTC forward pass, and the most probable one is
/// returned. `log_prob` is that exact log probability.
pub fn beam_decode(logits: &Tensor, beam: usize) -> Result<Hypothesis> {
    let blank = check(logits)?;
    if beam < 1 {
        return Err(Error::InvalidArgument("beam must be at least 1".into()));
    }
    let classes = blank + 1;
    let lp = log_softmax_rows(logits.data(), classes);
    let mut pool: BTreeSet<Vec<usize>> = BTreeSet::new();
    for width in 1..=beam {
        let fin = prefix_beam_search(&lp, classes, width);
        let saturated = fin.len() < width;
        pool.extend(fin.into_iter().map(|(p, _)| p));
        if saturated {
            // nothing was pruned, wider searches return the same beam
            break;
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for tokens in pool {
        let score = ctc_log_prob(&lp, classes, &tokens);
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((tokens, score));
        }
    }
    let (tokens, log_prob) = best.expect("pool is non-empty");
    Ok(Hypothesis {
        utterance_id: String::new(),
        tokens,
        log_prob,
    })
}

/// Exact most probable labelling by summing every frame path. Returns
/// `None` when more than `max_paths` paths would be enumerated.
pub fn exhaustive_decode(logits: &Tensor, max_paths: f64) -> Result<Option<Hypothesis>> {
    let blank = check(logits)?;
    let classes = blank + 1;
    let frames = logits.rows();
    if (classes as f64).powi(frames as i32) > max_paths {
        return Ok(None);
    }
    let lp = log_softmax_rows(logits.data(), classes);
    let mut sums: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut path = vec![0usize; frames];
    for mut code in 0..classes.pow(frames as u32) {
        for slot in path.iter_mut() {
            *slot = code % classes;
            code /= classes;
        }
        let mut label = Vec::new();
        let mut prev = None;
        for &k in &path {
            if Some(k) != prev && k != blank {
                label.push(k);
            }
            prev = Some(k);
        }
        let score: f64 = path.iter().enumerate().map(|(t, &k)| lp[t * classes + k]).sum();
        let e = sums.entry(label).or_insert(f64::NEG_INFINITY);
        *e = log_add(*e, score);
    }
    let (tokens, log_prob) = sums
        .into_iter()
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .expect("at least one path");
    Ok(Some(Hypothesis {
        utterance_id: String::new(),
        tokens,
        log_prob,
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStats {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Levenshtein distance with unit costs and one optimal S/I/D breakdown.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let (n, m) = (reference.len(), hypothesis.len());
    // table of (cost, subs, ins, dels)
    let mut prev: Vec<EditStats> = (0..=m)
        .map(|j| EditStats {
            distance: j,
            insertions: j,
            ..Default::default()
        })
        .collect();
    for i in 1..=n {
        let mut cur = Vec::with_capacity(m + 1);
        cur.push(EditStats {
            distance: i,
            deletions: i,
            ..Default::default()
        });
        for j in 1..=m {
            let diag = prev[j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            let mut best = EditStats {
                distance: diag.distance + usize::from(!same),
                substitutions: diag.substitutions + usize::from(!same),
                ..diag
            };
            let del = prev[j];
            if del.distance + 1 < best.distance {
                best = EditStats {
                    distance: del.distance + 1,
                    deletions: del.deletions + 1,
                    ..del
                };
            }
            let ins = cur[j - 1];
            if ins.distance + 1 < best.distance {
                best = EditStats {
                    distance: ins.distance + 1,
                    insertions: ins.insertions + 1,
                    ..ins
                };
            }
            cur.push(best);
        }
        prev = cur;
    }
    prev[m]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    /// Percent.
    pub error_rate: f64,
    pub errors: usize,
    pub reference_tokens: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub utterances: usize,
}

/// Total edits over total reference length, as a percentage.
pub fn score_corpus<T: PartialEq, R: AsRef<[T]>, H: AsRef<[T]>>(pairs: &[(R, H)]) -> Result<CorpusScore> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("scoring corpus"));
    }
    let mut s = CorpusScore {
        utterances: pairs.len(),
        ..Default::default()
    };
    for (r, h) in pairs {
        let e = edit_distance(r.as_ref(), h.as_ref());
        s.errors += e.distance;
        s.substitutions += e.substitutions;
        s.insertions += e.insertions;
        s.deletions += e.deletions;
        s.reference_tokens += r.as_ref().len();
    }
    if s.reference_tokens == 0 {
        return Err(Error::InvalidArgument("total reference length is zero".into()));
    }
    s.error_rate = 100.0 * s.errors as f64 / s.reference_tokens as f64;
    Ok(s)
}

/// One line per hypothesis: `utterance_id<TAB>log_prob<TAB>tokens`.
pub fn format_hypotheses(hyps: &[(Hypothesis, String)]) -> String {
    let mut out = String::new();
    for (h, text) in hyps {
        out.push_str(&format!("{}\t{}\t{}\n", h.utterance_id, h.log_prob, text));
    }
    out
}

/// Parse the hypothesis format back into `(utterance_id, token text)`.
pub fn parse_hypotheses(text: &str, path: &std::path::Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields[1].parse::<f64>().is_err() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "expected utterance_id, log_prob and tokens separated by tabs".into(),
            });
        }
        out.push((fields[0].to_string(), fields[2].to_string()));
    }
    Ok(out)
}
