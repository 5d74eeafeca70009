//! Citation-graph node classification.
//!
//! Every paper and every topic gets a neuron. Citations become static
//! excitatory links in both directions, training papers are tied to their
//! topic neuron the same way, and the paper under test gets weak plastic
//! links to every topic. Stimulating the test paper starts a wave through the
//! graph; topic neurons reached early enough are potentiated, and the
//! strongest link at the end names the prediction.

use super::{read_file, DataError};
use crate::dynamics::NeuronParams;
use crate::fixed::{Weight8, Q710};
use crate::network::{Network, NetworkConfig, RunTrace, Spike, SpikeEvent, DEFAULT_N_MAX};
use crate::oracle::{FloatNetwork, FloatRunOptions, StdpRule};
use crate::plasticity::StdpParams;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

pub const MAX_TOPICS: usize = 6;

/// Papers with topic labels and undirected citation links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationGraph {
    pub papers: Vec<String>,
    /// Topic index of each paper.
    pub topics: Vec<usize>,
    pub topic_names: Vec<String>,
    /// `(a, b)` with `a < b`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl CitationGraph {
    /// Normalizes `edges` (drops self links and duplicates) and checks indices.
    pub fn new(
        papers: Vec<String>,
        topics: Vec<usize>,
        topic_names: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, DataError> {
        if papers.len() != topics.len() {
            return Err(DataError::Invalid(format!("{} papers but {} topic labels", papers.len(), topics.len())));
        }
        if topic_names.len() > MAX_TOPICS {
            return Err(DataError::TooManyTopics(topic_names.len()));
        }
        if let Some(&t) = topics.iter().find(|&&t| t >= topic_names.len()) {
            return Err(DataError::Invalid(format!("topic index {t} without a name")));
        }
        let n = papers.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(DataError::Invalid(format!("edge ({a}, {b}) outside {n} papers")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(CitationGraph { papers, topics, topic_names, edges: set.into_iter().collect() })
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Connected components, each sorted, ordered by their lowest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !std::mem::replace(&mut seen[v], true) {
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Topics that label at least one paper.
    pub fn topics_present(&self) -> BTreeSet<usize> {
        self.topics.iter().copied().collect()
    }

    /// Subgraph on `keep` (in ascending index order). Topic names are kept.
    pub fn induced(&self, keep: &[usize]) -> CitationGraph {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![usize::MAX; self.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| remap[a] != usize::MAX && remap[b] != usize::MAX)
            .map(|&(a, b)| (remap[a], remap[b]));
        CitationGraph::new(
            keep.iter().map(|&i| self.papers[i].clone()).collect(),
            keep.iter().map(|&i| self.topics[i]).collect(),
            self.topic_names.clone(),
            edges,
        )
        .expect("subgraph of a valid graph")
    }
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields[0].eq_ignore_ascii_case("paper") && fields[1].eq_ignore_ascii_case("topic")
}

/// Builds a graph from a `paper,topic` label CSV (optional `paper,topic`
/// header) and a whitespace-separated edge list (`#` starts a comment).
/// Topic names are sorted and numbered from 0. When `keep` is given, only the
/// listed papers (whitespace separated) are retained.
pub fn parse_citation(labels: &str, edges: &str, keep: Option<&str>) -> Result<CitationGraph, DataError> {
    let mut papers = Vec::new();
    let mut raw_topics = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in labels.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && is_header(&fields) {
            continue;
        }
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::Row { row, message: "expected `paper,topic`".into() });
        }
        if index.insert(fields[0].to_string(), papers.len()).is_some() {
            return Err(DataError::Row { row, message: format!("paper {:?} labelled twice", fields[0]) });
        }
        papers.push(fields[0].to_string());
        raw_topics.push(fields[1].to_string());
    }
    if papers.is_empty() {
        return Err(DataError::Empty);
    }
    let names: BTreeSet<&String> = raw_topics.iter().collect();
    if names.len() > MAX_TOPICS {
        return Err(DataError::TooManyTopics(names.len()));
    }
    let topic_names: Vec<String> = names.into_iter().cloned().collect();
    let topics = raw_topics.iter().map(|t| topic_names.binary_search(t).expect("collected above")).collect();

    let lookup = |name: &str| index.get(name).copied().ok_or_else(|| DataError::UnknownNode(name.to_string()));
    let mut pairs = Vec::new();
    for (i, line) in edges.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(DataError::Row { row: i + 1, message: "expected two paper ids".into() });
        }
        pairs.push((lookup(fields[0])?, lookup(fields[1])?));
    }
    let graph = CitationGraph::new(papers, topics, topic_names, pairs)?;
    match keep {
        None => Ok(graph),
        Some(list) => {
            let ids = list
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(lookup)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(graph.induced(&ids))
        }
    }
}

pub fn load_citation(labels: &Path, edges: &Path, keep: Option<&Path>) -> Result<CitationGraph, DataError> {
    let keep = keep.map(read_file).transpose()?;
    parse_citation(&read_file(labels)?, &read_file(edges)?, keep.as_deref())
}

/// Shrinks `graph` to `target` papers: keep its largest connected component,
/// then repeatedly drop the lowest-degree paper (lowest index on ties) whose
/// removal leaves the rest connected and every topic of the input graph
/// still represented.
pub fn microseer_reduce(graph: &CitationGraph, target: usize) -> Result<CitationGraph, DataError> {
    let infeasible = |reason: String| DataError::Infeasible { target, reason };
    let comps = graph.components();
    let Some(largest) = comps.iter().max_by_key(|c| (c.len(), std::cmp::Reverse(c[0]))) else {
        return Err(DataError::Empty);
    };
    let required = graph.topics_present();
    let mut count = vec![0usize; graph.topic_names.len()];
    for &p in largest {
        count[graph.topics[p]] += 1;
    }
    if let Some(&t) = required.iter().find(|&&t| count[t] == 0) {
        return Err(infeasible(format!("largest component has no paper of topic {:?}", graph.topic_names[t])));
    }
    if target > largest.len() {
        return Err(infeasible(format!("largest component has only {} papers", largest.len())));
    }

    let adj = graph.adjacency();
    let mut alive = vec![false; graph.len()];
    for &p in largest {
        alive[p] = true;
    }
    let mut degree: Vec<usize> = (0..graph.len()).map(|u| adj[u].iter().filter(|&&v| alive[v]).count()).collect();
    let mut remaining = largest.len();

    let connected_without = |alive: &[bool], skip: usize, remaining: usize| -> bool {
        let Some(start) = (0..alive.len()).find(|&u| alive[u] && u != skip) else {
            return true;
        };
        let mut seen = vec![false; alive.len()];
        seen[start] = true;
        let mut reached = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if alive[v] && v != skip && !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == remaining - 1
    };

    while remaining > target {
        let mut order: Vec<usize> = (0..graph.len()).filter(|&u| alive[u]).collect();
        order.sort_by_key(|&u| (degree[u], u));
        let victim = order
            .into_iter()
            .find(|&u| count[graph.topics[u]] > 1 && (degree[u] <= 1 || connected_without(&alive, u, remaining)));
        let Some(u) = victim else {
            return Err(infeasible(format!("stuck at {remaining} papers: every removal breaks connectivity or topic coverage")));
        };
        alive[u] = false;
        remaining -= 1;
        count[graph.topics[u]] -= 1;
        for &v in &adj[u] {
            if alive[v] {
                degree[v] -= 1;
            }
        }
    }
    let keep: Vec<usize> = (0..graph.len()).filter(|&u| alive[u]).collect();
    Ok(graph.induced(&keep))
}

/// Which papers are held out for classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSplit {
    pub test: Vec<usize>,
}

impl GraphSplit {
    /// `round(test_fraction * papers)` papers chosen by a seeded shuffle, sorted.
    pub fn seeded(papers: usize, test_fraction: f64, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..papers).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(((test_fraction * papers as f64).round() as usize).min(papers));
        idx.sort_unstable();
        GraphSplit { test: idx }
    }

    pub fn is_test(&self, paper: usize) -> bool {
        self.test.binary_search(&paper).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphParams {
    pub citation_weight: i8,
    pub topic_weight: i8,
    pub plastic_init: i8,
    pub stimulus_weight: i8,
    pub weight_shift: u8,
    pub neuron: NeuronParams,
    pub stdp: StdpParams,
    pub stimulus_period: u32,
    pub stimulus_pulses: u32,
    pub n_max: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            citation_weight: 64,
            topic_weight: 64,
            plastic_init: 2,
            stimulus_weight: 64,
            weight_shift: 6,
            neuron: NeuronParams {
                v_th: Q710::from_f64(2.0),
                leak: Q710::ZERO,
                refractory_steps: 16,
                v_reset: Q710::ZERO,
                syn_leak: Q710::MAX,
                membrane_floor: true,
            },
            stdp: StdpParams { dw_pos: 8, dw_neg: 4, t_pre: 3, t_post: 3, enabled: true },
            stimulus_period: 24,
            stimulus_pulses: 8,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl GraphParams {
    pub fn t_end(&self) -> u32 {
        self.stimulus_period * self.stimulus_pulses
    }

    /// Pulses on input channel 0.
    pub fn stimulus(&self) -> Vec<SpikeEvent> {
        (0..self.stimulus_pulses).map(|k| SpikeEvent::new(k * self.stimulus_period, 0)).collect()
    }

    /// Exponential kernel with the rectangular rule's amplitudes and windows
    /// as time constants.
    pub fn exponential_rule(&self) -> StdpRule {
        StdpRule::Exponential {
            a_pos: self.stdp.dw_pos as f64,
            a_neg: self.stdp.dw_neg as f64,
            tau_pos: self.stdp.t_pre as f64,
            tau_neg: self.stdp.t_post as f64,
        }
    }
}

/// A graph laid out on the core: neurons `0..papers` are papers, the next
/// `topics` neurons are topic neurons. One input channel carries the stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNetwork {
    pub config: NetworkConfig,
    pub papers: usize,
    pub topics: usize,
    pub split: GraphSplit,
    pub truth: Vec<usize>,
    /// Whether a test paper has a citation path to some training paper.
    pub reachable: Vec<bool>,
    pub stimulus_weight: i8,
}

impl GraphNetwork {
    pub fn topic_neuron(&self, k: usize) -> usize {
        self.papers + k
    }

    /// The configuration used while classifying `paper`: stimulus wired to it
    /// and plasticity restricted to its topic links.
    pub fn config_for(&self, paper: usize) -> NetworkConfig {
        let mut cfg = self.config.clone();
        cfg.w_in[(paper, 0)] = Weight8(self.stimulus_weight);
        cfg.enable_stdp_aa.fill(false);
        for k in 0..self.topics {
            let t = self.topic_neuron(k);
            cfg.enable_stdp_aa[(paper, t)] = true;
            cfg.enable_stdp_aa[(t, paper)] = true;
        }
        cfg.monitored_neuron = paper;
        cfg
    }
}

/// Lays out `graph` on the core with the given held-out papers.
pub fn build_graph_network(graph: &CitationGraph, split: &GraphSplit, params: &GraphParams) -> Result<GraphNetwork, DataError> {
    let papers = graph.len();
    let topics = graph.topic_names.len();
    if papers == 0 {
        return Err(DataError::Empty);
    }
    if papers + topics > params.n_max {
        return Err(DataError::Capacity { papers, topics, n_max: params.n_max });
    }
    if let Some(&p) = split.test.iter().find(|&&p| p >= papers) {
        return Err(DataError::Invalid(format!("test paper {p} outside {papers} papers")));
    }
    let n = papers + topics;
    let mut cfg = NetworkConfig::new(n, 1);
    cfg.n_max = params.n_max;
    cfg.weight_shift = params.weight_shift;
    cfg.neuron_params = params.neuron;
    cfg.stdp_params = params.stdp;
    for &(a, b) in &graph.edges {
        cfg.w_aa[(a, b)] = Weight8(params.citation_weight);
        cfg.w_aa[(b, a)] = Weight8(params.citation_weight);
    }
    for p in 0..papers {
        let t = papers + graph.topics[p];
        if split.is_test(p) {
            for k in 0..topics {
                cfg.w_aa[(p, papers + k)] = Weight8(params.plastic_init);
                cfg.w_aa[(papers + k, p)] = Weight8(params.plastic_init);
                cfg.enable_stdp_aa[(p, papers + k)] = true;
                cfg.enable_stdp_aa[(papers + k, p)] = true;
            }
        } else {
            cfg.w_aa[(p, t)] = Weight8(params.topic_weight);
            cfg.w_aa[(t, p)] = Weight8(params.topic_weight);
        }
    }
    cfg.validate().map_err(|e| DataError::Invalid(e.to_string()))?;

    let adj = graph.adjacency();
    let reachable = (0..papers)
        .map(|start| {
            let mut seen = vec![false; papers];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                if !split.is_test(u) {
                    return true;
                }
                for &v in &adj[u] {
                    if !std::mem::replace(&mut seen[v], true) {
                        queue.push_back(v);
                    }
                }
            }
            false
        })
        .collect();
    Ok(GraphNetwork {
        config: cfg,
        papers,
        topics,
        split: split.clone(),
        truth: graph.topics.clone(),
        reachable,
        stimulus_weight: params.stimulus_weight,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePrediction {
    pub paper: usize,
    pub predicted: usize,
    pub truth: usize,
    /// Final `w_aa[paper][topic]` for every topic.
    pub topic_weights: Vec<i8>,
    pub reachable: bool,
    /// Every topic weight ended equal, so the prediction is the tie rule's.
    pub tied: bool,
}

/// Stimulates `paper` from rest and reads the strongest topic link. Ties go
/// to topic 0.
pub fn classify_node(net: &GraphNetwork, paper: usize, params: &GraphParams) -> (NodePrediction, RunTrace) {
    let cfg = net.config_for(paper);
    let trace = Network::new(cfg)
        .expect("graph network validated at build time")
        .run(&params.stimulus(), params.t_end())
        .expect("stimulus is a valid stream");
    let w = &trace.final_weights.as_ref().expect("run returns weights").w_aa;
    let topic_weights: Vec<i8> = (0..net.topics).map(|k| w[(paper, net.topic_neuron(k))].0).collect();
    let mut predicted = 0;
    for (k, &v) in topic_weights.iter().enumerate() {
        if v > topic_weights[predicted] {
            predicted = k;
        }
    }
    let tied = topic_weights.windows(2).all(|p| p[0] == p[1]);
    let prediction = NodePrediction {
        paper,
        predicted,
        truth: net.truth[paper],
        topic_weights,
        reachable: net.reachable[paper],
        tied,
    };
    (prediction, trace)
}

/// Learning trajectories of one test paper's topic links under the core's
/// rectangular rule and under a float exponential rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub paper: usize,
    /// Sample timestamps.
    pub times: Vec<u32>,
    /// `fixed[i][k]`: `w_aa[paper][topic k]` at `times[i]` on the core.
    pub fixed: Vec<Vec<i8>>,
    /// Same on the float model, in weight units.
    pub float: Vec<Vec<f64>>,
    pub fixed_raster: Vec<Spike>,
    pub float_raster: Vec<Spike>,
    /// Largest `|fixed - float|` over all samples.
    pub max_abs_gap: f64,
}

impl DivergenceReport {
    pub fn diverged(&self) -> bool {
        self.max_abs_gap > 0.0
    }
}

pub fn divergence_report(net: &GraphNetwork, paper: usize, params: &GraphParams, every: u32) -> DivergenceReport {
    let every = every.max(1);
    let cfg = net.config_for(paper);
    let topic_cols: Vec<usize> = (0..net.topics).map(|k| net.topic_neuron(k)).collect();

    let mut core = Network::new(cfg.clone()).expect("graph network validated at build time");
    let stimulus = params.stimulus();
    let mut times = Vec::new();
    let mut fixed: Vec<Vec<i8>> = Vec::new();
    let mut fixed_raster = Vec::new();
    let mut head = 0;
    for t in 0..params.t_end() {
        let start = head;
        while head < stimulus.len() && stimulus[head].time == t {
            head += 1;
        }
        let out = core.step(&stimulus[start..head]).expect("stimulus is a valid stream");
        fixed_raster.extend(out.fired.iter().map(|&k| Spike { time: out.time, neuron: k as u16 }));
        if out.time.is_multiple_of(every) {
            times.push(out.time);
            let w = core.weights().0;
            fixed.push(topic_cols.iter().map(|&c| w[(paper, c)].0).collect());
        }
    }

    let mut model = FloatNetwork::from_fixed(&cfg, Some(params.exponential_rule()));
    let opts = FloatRunOptions { record_weights_every: Some(every), ..FloatRunOptions::default() };
    let float_trace = model.run_with(&stimulus, params.t_end(), &opts);
    let float: Vec<Vec<f64>> =
        float_trace.weight_history.iter().map(|(_, w_aa, _)| topic_cols.iter().map(|&c| w_aa[(paper, c)]).collect()).collect();

    let max_abs_gap = fixed
        .iter()
        .zip(&float)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()))
        .fold(0.0, f64::max);
    DivergenceReport {
        paper,
        times,
        fixed,
        float,
        fixed_raster,
        float_raster: float_trace.raster,
        max_abs_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn path_graph_loses_endpoints_first() {
        let g = CitationGraph::new(names(5), vec![0; 5], vec!["t".into()], [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let r = microseer_reduce(&g, 3).unwrap();
        assert_eq!(r.papers, vec!["p2", "p3", "p4"]);
        assert_eq!(microseer_reduce(&g, 5).unwrap(), g);
        assert!(matches!(microseer_reduce(&g, 6), Err(DataError::Infeasible { .. })));
    }

    #[test]
    fn reduction_keeps_topics() {
        // Star around p0; the leaves carry distinct topics, so none may go.
        let g = CitationGraph::new(names(4), vec![0, 1, 2, 0], (0..3).map(|i| i.to_string()).collect(), [(0, 1), (0, 2), (0, 3)])
            .unwrap();
        let r = microseer_reduce(&g, 3).unwrap();
        assert_eq!(r.papers, vec!["p0", "p1", "p2"]);
        assert!(microseer_reduce(&g, 2).is_err());
    }

    #[test]
    fn parse_labels_and_edges() {
        let labels = "paper,topic\na,ML\nb,DB\nc,ML\n";
        let edges = "# citing cited\na b\nb c # trailing\nc c\n";
        let g = parse_citation(labels, edges, None).unwrap();
        assert_eq!(g.topic_names, vec!["DB", "ML"]);
        assert_eq!(g.topics, vec![1, 0, 1]);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert!(matches!(parse_citation(labels, "a z\n", None), Err(DataError::UnknownNode(z)) if z == "z"));
        let kept = parse_citation(labels, edges, Some("a b")).unwrap();
        assert_eq!(kept.papers, vec!["a", "b"]);
        let many: String = (0..7).map(|i| format!("p{i},t{i}\n")).collect();
        assert!(matches!(parse_citation(&many, "", None), Err(DataError::TooManyTopics(7))));
        assert!(matches!(parse_citation("", "", None), Err(DataError::Empty)));
    }
}
