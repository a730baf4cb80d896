#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use qnt_core::net::{LinkId, Network, NodeId};
use qnt_core::qfi::{direct_qfi, indirect_qfi, IndirectMode};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.3..0.99)).collect()
}

/// Random labelled tree on `n` nodes (each node attaches to an earlier one).
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Network {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let links: Vec<(String, String, f64)> = (1..n)
        .map(|i| {
            let parent = rng.random_range(0..i);
            (names[parent].clone(), names[i].clone(), rng.random_range(0.3..0.99))
        })
        .collect();
    Network::new(&names, &links).unwrap()
}

/// Random connected graph: a random tree plus `extra` chords.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> Network {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        pairs.insert((rng.random_range(0..i), i));
    }
    for _ in 0..extra * 4 {
        if pairs.len() >= n - 1 + extra {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let links: Vec<(String, String, f64)> = pairs
        .into_iter()
        .map(|(a, b)| (names[a].clone(), names[b].clone(), rng.random_range(0.3..0.99)))
        .collect();
    Network::new(&names, &links).unwrap()
}

/// Exhaustive optimum over all placements and all link assignments.
pub struct BruteForce<'a> {
    pub net: &'a Network,
    pub sites: Vec<NodeId>,
    pub monitors: usize,
    pub capacities: Option<Vec<usize>>,
    pub strict: bool,
    pub mode: IndirectMode,
}

impl BruteForce<'_> {
    fn coefficient(&self, node: NodeId, link: LinkId) -> f64 {
        let path = self.net.shortest_monitor_path(node, link);
        if path.links.len() == 1 {
            direct_qfi(self.net.werner(link)).unwrap()
        } else {
            let w: Vec<f64> = path.links.iter().map(|&l| self.net.werner(l)).collect();
            indirect_qfi(&w, w.len() - 1, self.mode).unwrap()
        }
    }

    fn placements(&self) -> Vec<Vec<NodeId>> {
        let uniform = self
            .capacities
            .as_ref()
            .is_none_or(|c| c.iter().all(|&x| x == c[0]));
        let mut out = Vec::new();
        let mut cur = Vec::new();
        self.place(uniform, &mut cur, &mut out);
        out
    }

    fn place(&self, ordered_once: bool, cur: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
        if cur.len() == self.monitors {
            out.push(cur.clone());
            return;
        }
        for &s in &self.sites {
            if cur.contains(&s) || (ordered_once && cur.last().is_some_and(|&l| l >= s)) {
                continue;
            }
            cur.push(s);
            self.place(ordered_once, cur, out);
            cur.pop();
        }
    }

    /// Best trace, or `None` when nothing is feasible.
    pub fn optimum(&self) -> Option<f64> {
        let n = self.net.link_count();
        let mut best: Option<f64> = None;
        for placement in self.placements() {
            // options[i] = (monitor, direct, value)
            let options: Vec<Vec<(usize, bool, f64)>> = (0..n)
                .map(|i| {
                    let link = self.net.link(LinkId(i));
                    let at_end: Vec<usize> = (0..self.monitors)
                        .filter(|&j| link.has_endpoint(placement[j]))
                        .collect();
                    if at_end.is_empty() {
                        (0..self.monitors)
                            .map(|j| (j, false, self.coefficient(placement[j], LinkId(i))))
                            .collect()
                    } else {
                        let v = direct_qfi(self.net.werner(LinkId(i))).unwrap();
                        at_end.into_iter().map(|j| (j, true, v)).collect()
                    }
                })
                .collect();
            let mut choice = vec![0usize; n];
            let mut loads = vec![0usize; self.monitors];
            self.assign(0, &placement, &options, &mut choice, &mut loads, &mut best);
        }
        best
    }

    fn assign(
        &self,
        i: usize,
        placement: &[NodeId],
        options: &[Vec<(usize, bool, f64)>],
        choice: &mut Vec<usize>,
        loads: &mut Vec<usize>,
        best: &mut Option<f64>,
    ) {
        if i == options.len() {
            if self.strict {
                for (t, opts) in options.iter().enumerate() {
                    let (j, direct, _) = opts[choice[t]];
                    if direct {
                        continue;
                    }
                    let path = self.net.shortest_monitor_path(placement[j], LinkId(t));
                    if path.links.iter().any(|h| options[h.0][choice[h.0]].0 != j) {
                        return;
                    }
                }
            }
            let v: f64 = (0..options.len()).map(|t| options[t][choice[t]].2).sum();
            if best.is_none_or(|b| v > b) {
                *best = Some(v);
            }
            return;
        }
        for (c, &(j, _, _)) in options[i].iter().enumerate() {
            if let Some(caps) = &self.capacities {
                if loads[j] + 1 > caps[j] {
                    continue;
                }
            }
            loads[j] += 1;
            choice[i] = c;
            self.assign(i + 1, placement, options, choice, loads, best);
            loads[j] -= 1;
        }
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// `(name, terms, operator, rhs)`.
pub type LpRow = (String, Vec<(f64, String)>, String, f64);

/// Minimal reader for the LP files written by `export_lp`.
#[derive(Debug, Default)]
pub struct ParsedLp {
    pub objective: Vec<(f64, String)>,
    pub rows: Vec<LpRow>,
    pub bounds: HashMap<String, (f64, f64)>,
    pub binaries: Vec<String>,
    pub generals: Vec<String>,
}

impl ParsedLp {
    pub fn variables(&self) -> BTreeSet<String> {
        let mut v: BTreeSet<String> = self.binaries.iter().chain(&self.generals).cloned().collect();
        for (_, terms, _, _) in &self.rows {
            v.extend(terms.iter().map(|t| t.1.clone()));
        }
        v.extend(self.objective.iter().map(|t| t.1.clone()));
        v
    }
}

fn parse_terms(tokens: &[&str]) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            "0" if coef.is_none() && tokens.len() == 1 => {}
            t => match t.parse::<f64>() {
                Ok(c) => coef = Some(c),
                Err(_) => {
                    out.push((sign * coef.take().unwrap_or(1.0), t.to_string()));
                    sign = 1.0;
                }
            },
        }
    }
    out
}

pub fn parse_lp(text: &str) -> ParsedLp {
    #[derive(PartialEq)]
    enum Section {
        None,
        Objective,
        Rows,
        Bounds,
        Binaries,
        Generals,
    }
    let mut section = Section::None;
    let mut lp = ParsedLp::default();
    let mut statements: Vec<(bool, String)> = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.starts_with('\\') || line.is_empty() {
            continue;
        }
        match line {
            "Maximize" | "Minimize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binaries" => {
                section = Section::Binaries;
                continue;
            }
            "Generals" => {
                section = Section::Generals;
                continue;
            }
            "End" => break,
            _ => {}
        }
        match section {
            Section::Objective | Section::Rows => {
                let continuation = raw.starts_with("   ") && !line.contains(':');
                if continuation {
                    statements.last_mut().unwrap().1.push_str(&format!(" {line}"));
                } else {
                    statements.push((section == Section::Objective, line.to_string()));
                }
            }
            Section::Bounds => {
                let t: Vec<&str> = line.split_whitespace().collect();
                lp.bounds.insert(t[2].to_string(), (t[0].parse().unwrap(), t[4].parse().unwrap()));
            }
            Section::Binaries => lp.binaries.push(line.to_string()),
            Section::Generals => lp.generals.push(line.to_string()),
            Section::None => panic!("content before objective: {line}"),
        }
    }
    for (is_obj, stmt) in statements {
        let (name, body) = stmt.split_once(':').unwrap();
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if is_obj {
            lp.objective = parse_terms(&tokens);
        } else {
            let op = tokens.iter().position(|t| matches!(*t, "<=" | ">=" | "=")).unwrap();
            let rhs: f64 = tokens[op + 1..].join("").parse().unwrap();
            lp.rows.push((name.trim().to_string(), parse_terms(&tokens[..op]), tokens[op].to_string(), rhs));
        }
    }
    lp
}
