//! Choosing the correct description for a test image: the general
//! per-triple comparison, and the data-specific link-cycle resolution for
//! test sets where each incorrect description is some other triple's
//! correct one.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::numeric::Vector;
use crate::siamese::{compatibility, SiameseParams};

/// Which of the two candidate descriptions a decision names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn other(self) -> Choice {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Choice::A => "A",
            Choice::B => "B",
        }
    }

    pub fn parse(s: &str) -> Result<Choice> {
        match s {
            "A" => Ok(Choice::A),
            "B" => Ok(Choice::B),
            other => Err(Error::Validation(format!("invalid choice '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    General,
    Link,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::General => "general",
            Method::Link => "link",
        }
    }
}

/// One candidate description: its normalized token set and its level-2 text
/// vector.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tokens: BTreeSet<String>,
    pub text_vec: Vector,
}

impl Candidate {
    /// Canonical form used for description equality across triples.
    pub fn key(&self) -> String {
        self.tokens.iter().cloned().collect::<Vec<_>>().join(" ")
    }
}

/// A test item: image vector plus two candidate descriptions, optionally
/// gold-labeled.
#[derive(Debug, Clone)]
pub struct TestTriple {
    pub id: String,
    pub image_vec: Vector,
    pub cand_a: Candidate,
    pub cand_b: Candidate,
    pub gold: Option<Choice>,
}

impl TestTriple {
    pub fn new(
        id: String,
        image_vec: Vector,
        cand_a: Candidate,
        cand_b: Candidate,
        gold: Option<Choice>,
    ) -> Result<TestTriple> {
        if cand_a.tokens == cand_b.tokens {
            return Err(Error::Validation(format!(
                "triple {id}: both candidates normalize to the same token set"
            )));
        }
        Ok(TestTriple {
            id,
            image_vec,
            cand_a,
            cand_b,
            gold,
        })
    }

    pub fn candidate(&self, c: Choice) -> &Candidate {
        match c {
            Choice::A => &self.cand_a,
            Choice::B => &self.cand_b,
        }
    }
}

/// Image/text dissimilarity provider. The trained siamese parameters are
/// the production implementation; tests substitute score tables.
pub trait PairScorer {
    /// Squared code-space compatibility C^2; nonnegative, 0 only for
    /// identical codes. Smaller means a better fit.
    fn dissimilarity(&self, image_vec: &Vector, text_vec: &Vector) -> Result<f64>;
}

impl PairScorer for SiameseParams {
    fn dissimilarity(&self, image_vec: &Vector, text_vec: &Vector) -> Result<f64> {
        pair_dissimilarity(self, image_vec, text_vec)
    }
}

/// The matched-pair contrastive value C^2 for one image/text pair.
pub fn pair_dissimilarity(
    params: &SiameseParams,
    image_vec: &Vector,
    text_vec: &Vector,
) -> Result<f64> {
    let code_f = params.image_net.encode(image_vec)?;
    let code_g = params.text_net.encode(text_vec)?;
    let c = compatibility(&code_f, &code_g)?;
    Ok(c * c)
}

/// One decided triple; `chosen` follows from the recorded scores under the
/// recorded method.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub id: String,
    pub chosen: Choice,
    pub score_a: f64,
    pub score_b: f64,
    pub method: Method,
    /// Exact score tie, resolved toward A.
    pub tie: bool,
}

/// Both candidates' dissimilarities for one triple.
pub fn score_triple<S: PairScorer + ?Sized>(scorer: &S, triple: &TestTriple) -> Result<(f64, f64)> {
    Ok((
        scorer.dissimilarity(&triple.image_vec, &triple.cand_a.text_vec)?,
        scorer.dissimilarity(&triple.image_vec, &triple.cand_b.text_vec)?,
    ))
}

fn decide_from_scores(
    id: &str,
    score_a: f64,
    score_b: f64,
    method: Method,
) -> Decision {
    // Smaller dissimilarity = larger compatibility wins; exact ties go to A.
    let tie = score_a == score_b;
    let chosen = if score_a <= score_b { Choice::A } else { Choice::B };
    Decision {
        id: id.to_string(),
        chosen,
        score_a,
        score_b,
        method,
        tie,
    }
}

/// General strategy: score both candidates and keep the one with the
/// smaller dissimilarity.
pub fn choose_general<S: PairScorer + ?Sized>(
    triple: &TestTriple,
    scorer: &S,
) -> Result<Decision> {
    let (score_a, score_b) = score_triple(scorer, triple)?;
    Ok(decide_from_scores(&triple.id, score_a, score_b, Method::General))
}

/// Description-sharing structure of a test set. Triples sit either on a
/// cycle (every member has both candidates shared) or in `unlinked`.
#[derive(Debug, Clone)]
pub struct LinkGraph {
    /// Ordered triple-index cycles, each of length >= 2, canonically rotated
    /// (smallest id first, direction toward the smaller neighboring id).
    pub cycles: Vec<Vec<usize>>,
    /// (triple, candidate) -> the other occurrence of the same description.
    pub edges: BTreeMap<(usize, Choice), (usize, Choice)>,
    /// Triple indices on no cycle.
    pub unlinked: Vec<usize>,
}

/// Links candidates across triples by normalized-token-set equality and
/// walks the resulting degree-<=2 graph into cycles. A description occurring
/// in three or more triples violates the data property and fails.
pub fn build_link_graph(triples: &[TestTriple]) -> Result<LinkGraph> {
    let mut occurrences: BTreeMap<String, Vec<(usize, Choice)>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        if t.cand_a.tokens == t.cand_b.tokens {
            return Err(Error::Validation(format!(
                "triple {}: both candidates normalize to the same token set",
                t.id
            )));
        }
        occurrences.entry(t.cand_a.key()).or_default().push((i, Choice::A));
        occurrences.entry(t.cand_b.key()).or_default().push((i, Choice::B));
    }

    let mut edges: BTreeMap<(usize, Choice), (usize, Choice)> = BTreeMap::new();
    for (desc, occ) in &occurrences {
        match occ.len() {
            1 => {}
            2 => {
                edges.insert(occ[0], occ[1]);
                edges.insert(occ[1], occ[0]);
            }
            n => {
                return Err(Error::DataIntegrity(format!(
                    "description '{desc}' appears in {n} triples; each may appear in at most 2"
                )));
            }
        }
    }

    let degree =
        |i: usize| -> usize {
            edges.contains_key(&(i, Choice::A)) as usize
                + edges.contains_key(&(i, Choice::B)) as usize
        };

    let n = triples.len();
    let mut assigned = vec![false; n];
    let mut cycles = Vec::new();
    let mut unlinked = Vec::new();

    // Components of the degree-<=2 sharing graph; a component is a cycle
    // exactly when every member has both candidates linked.
    let mut comp_of = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if comp_of[start] != usize::MAX || degree(start) == 0 {
            continue;
        }
        let comp_id = components.len();
        let mut members = Vec::new();
        let mut queue = vec![start];
        comp_of[start] = comp_id;
        while let Some(t) = queue.pop() {
            members.push(t);
            for cand in [Choice::A, Choice::B] {
                if let Some(&(next, _)) = edges.get(&(t, cand)) {
                    if comp_of[next] == usize::MAX {
                        comp_of[next] = comp_id;
                        queue.push(next);
                    }
                }
            }
        }
        components.push(members);
    }

    for members in components {
        let is_cycle = members.iter().all(|&t| degree(t) == 2);
        if !is_cycle {
            for t in members {
                assigned[t] = true;
                unlinked.push(t);
            }
            continue;
        }
        // Canonical walk: start at the member with the smallest id, first
        // step toward the smaller neighboring id (ties exit via A).
        let start = *members
            .iter()
            .min_by(|&&x, &&y| triples[x].id.cmp(&triples[y].id))
            .unwrap();
        let (na, _) = edges[&(start, Choice::A)];
        let (nb, _) = edges[&(start, Choice::B)];
        let mut exit = if triples[na].id <= triples[nb].id {
            Choice::A
        } else {
            Choice::B
        };
        let mut cycle = vec![start];
        let mut cur = start;
        loop {
            let (next, entered_via) = edges[&(cur, exit)];
            if next == start {
                break;
            }
            cycle.push(next);
            exit = entered_via.other();
            cur = next;
        }
        if cycle.len() != members.len() {
            return Err(Error::DataIntegrity(format!(
                "cycle walk visited {} of {} component members",
                cycle.len(),
                members.len()
            )));
        }
        for &t in &cycle {
            assigned[t] = true;
        }
        cycles.push(cycle);
    }

    for (i, seen) in assigned.iter().enumerate() {
        if !seen {
            unlinked.push(i);
        }
    }
    unlinked.sort_unstable();
    cycles.sort_by(|a, b| triples[a[0]].id.cmp(&triples[b[0]].id));
    Ok(LinkGraph {
        cycles,
        edges,
        unlinked,
    })
}

/// Link strategy: per cycle, anchor on the member with the largest squared
/// score gap, decide it generally, then propagate -- a description shared by
/// two triples is correct for exactly one of them, so the anchor's decision
/// fixes every member. Unlinked triples fall back to the general strategy.
/// Returns decisions in triple order.
pub fn resolve_links<S: PairScorer + ?Sized>(
    graph: &LinkGraph,
    triples: &[TestTriple],
    scorer: &S,
) -> Result<Vec<Decision>> {
    let mut scores = Vec::with_capacity(triples.len());
    for t in triples {
        scores.push(score_triple(scorer, t)?);
    }
    let mut decisions: Vec<Option<Decision>> = vec![None; triples.len()];

    for &i in &graph.unlinked {
        let (sa, sb) = scores[i];
        decisions[i] = Some(decide_from_scores(&triples[i].id, sa, sb, Method::General));
    }

    for cycle in &graph.cycles {
        // Maximum discrepancy of compatibility over the cycle; the first
        // member wins exact ties.
        let mut anchor = cycle[0];
        let mut best_gap = f64::NEG_INFINITY;
        for &t in cycle {
            let (sa, sb) = scores[t];
            let gap = (sa - sb) * (sa - sb);
            if gap > best_gap {
                best_gap = gap;
                anchor = t;
            }
        }
        let (sa, sb) = scores[anchor];
        let anchor_decision = decide_from_scores(&triples[anchor].id, sa, sb, Method::Link);
        let anchor_choice = anchor_decision.chosen;
        decisions[anchor] = Some(anchor_decision);

        let mut cur = anchor;
        let mut cur_choice = anchor_choice;
        loop {
            let incorrect = cur_choice.other();
            let &(next, next_cand) = graph.edges.get(&(cur, incorrect)).ok_or_else(|| {
                Error::DataIntegrity(format!(
                    "cycle member {} lost its {} link",
                    triples[cur].id,
                    incorrect.as_str()
                ))
            })?;
            if next == anchor {
                if next_cand != anchor_choice {
                    return Err(Error::DataIntegrity(format!(
                        "cycle through {} is not consistently orientable",
                        triples[anchor].id
                    )));
                }
                break;
            }
            let (nsa, nsb) = scores[next];
            decisions[next] = Some(Decision {
                id: triples[next].id.clone(),
                chosen: next_cand,
                score_a: nsa,
                score_b: nsb,
                method: Method::Link,
                tie: false,
            });
            cur = next;
            cur_choice = next_cand;
        }
    }

    decisions
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            d.ok_or_else(|| {
                Error::DataIntegrity(format!("triple {} was never decided", triples[i].id))
            })
        })
        .collect()
}

/// Dissimilarity expressed as a probability: P = s1^2 / (s1^2 + s2^2).
/// Small P means the first candidate fits better. Returns the degenerate
/// flag (true when both scores are zero and P defaults to 0.5).
pub fn pair_probability(s1: f64, s2: f64) -> Result<(f64, bool)> {
    if s1 < 0.0 || s2 < 0.0 {
        return Err(Error::Validation(format!(
            "pair_probability needs nonnegative scores, got ({s1}, {s2})"
        )));
    }
    let num = s1 * s1;
    let den = num + s2 * s2;
    if den == 0.0 {
        return Ok((0.5, true));
    }
    Ok((num / den, false))
}

/// Area under the ROC curve via the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted half.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scored.iter().filter(|(_, label)| *label).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());
    // Average ranks over tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            if scored[k].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
