//! Epoch/round protocol: self-anchoring, partner sampling, message
//! generation, trust gating and Bayesian fusion.
//!
//! Each round runs in two phases. Every active agent first generates its
//! messages against a frozen snapshot of the belief matrix, each from its own
//! keyed random stream, so generation order is irrelevant (and is done in
//! parallel). Messages are then applied one by one in canonical
//! (sender id, partner index) order.

mod fusion;
mod round;

pub use fusion::fuse;
pub use round::{compose_message, sample_partners, squash_uncertainty, Message, RoundLogEntry, CLAIM_NOISE_SCALE};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ability_map, latent_truth, AbilityScale, Belief, BeliefMatrix, ClassId, Cohort, ExamSeries, LatentTruth, StudentId,
};
use crate::error::{Error, Result};
use crate::graph::{
    alpha_from_anxiety, build_base_graph, perturb_graph, union_of_reported_ties, NoiseProfile, SubjectiveGraph,
};
use crate::knowledge::{mechanism_leak_check, retrieve, EvidenceBase, EvidenceBundle, QueryPurpose, RetrievalQuery};
use crate::metrics::{aggregate_mean_belief, class_diversity, evaluate, group_uncertainty, EpochReport};
use crate::rng::{Purpose, StreamKey};
use crate::trust::{
    audit_wire, precision_from, AlphaBand, ProviderTag, SenderProfile, StubTrust, TrustProvider, TrustRequest,
    WireRequest,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Trust requests carry no retrieved evidence.
    pub no_rag: bool,
    /// Every agent sees the same symmetrised union of reported ties.
    pub no_subjective_graph: bool,
    /// Force the consistency stub as trust provider.
    pub no_llm_trust: bool,
}

impl Ablations {
    pub fn all() -> [Ablations; 8] {
        let mut out = [Ablations::default(); 8];
        for (i, a) in out.iter_mut().enumerate() {
            a.no_rag = i & 1 != 0;
            a.no_subjective_graph = i & 2 != 0;
            a.no_llm_trust = i & 4 != 0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuInitPolicy {
    #[default]
    Zero,
    ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub epochs: usize,
    pub rounds_per_epoch: usize,
    pub max_partners: usize,
    pub sigma_self: f64,
    pub sigma_init: f64,
    pub mu_init_policy: MuInitPolicy,
    pub kappa: f64,
    pub seed: u64,
    pub ablations: Ablations,
    pub scale: AbilityScale,
    /// Redraw graph perturbations every epoch; otherwise draw once at t = 1.
    pub reperturb_each_epoch: bool,
    pub acc_ks: Vec<usize>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            rounds_per_epoch: 2,
            max_partners: 3,
            sigma_self: 0.04,
            sigma_init: 1.0,
            mu_init_policy: MuInitPolicy::Zero,
            kappa: crate::trust::DEFAULT_KAPPA,
            seed: 42,
            ablations: Ablations::default(),
            scale: AbilityScale::ZscoreWithinClass,
            reperturb_each_epoch: true,
            acc_ks: vec![3],
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.max_partners == 0 {
            return Err(Error::Config("epochs and max_partners must be >= 1".into()));
        }
        if !(self.sigma_self > 0.0 && self.sigma_self < self.sigma_init && self.sigma_init.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < sigma_self < sigma_init, got {} and {}",
                self.sigma_self, self.sigma_init
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.acc_ks.contains(&0) {
            return Err(Error::Config("acc_ks entries must be >= 1".into()));
        }
        Ok(())
    }
}

/// Uninformed prior for every (observer, target) pair.
pub fn init_beliefs(cohort: &Cohort, config: &ProtocolConfig) -> BeliefMatrix {
    let mu = match config.mu_init_policy {
        MuInitPolicy::Zero => 0.0,
        MuInitPolicy::ClassMean => config.scale.class_mean(),
    };
    BeliefMatrix::filled(
        cohort.len(),
        Belief {
            mu,
            sigma: config.sigma_init,
        },
    )
}

/// Sets every diagonal entry to the student's own mapped ability with
/// variance `sigma_self`. Off-diagonal entries are untouched.
pub fn self_anchor(beliefs: &mut BeliefMatrix, abilities: &[f64], sigma_self: f64) -> Result<()> {
    if abilities.len() != beliefs.n() {
        return Err(Error::validation("self_anchor: ability vector does not match matrix"));
    }
    for (j, &h) in abilities.iter().enumerate() {
        beliefs.set(j, j, Belief::new(h, sigma_self)?);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub beliefs: BeliefMatrix,
    pub graphs: BTreeMap<StudentId, SubjectiveGraph>,
    pub epoch: usize,
}

/// Runtime checks on every retrieval and trust request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub retrievals: usize,
    pub leak_check_failures: usize,
    pub distractors: usize,
    pub trust_requests: usize,
    pub wire_violations: usize,
}

/// Group uncertainty right after anchoring and after each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub unc_after_anchor: f64,
    pub unc_after_round: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOutput {
    pub reports: Vec<EpochReport>,
    /// Belief matrix at the end of each epoch.
    pub trajectory: Vec<BeliefMatrix>,
    pub round_log: Vec<RoundLogEntry>,
    pub traces: Vec<EpochTrace>,
    pub audit: AuditCounts,
    pub provider_tags: BTreeMap<ProviderTag, usize>,
}

/// A simulation instance. Single writer over its state.
pub struct Simulation<'a> {
    cohort: &'a Cohort,
    scores: &'a ExamSeries,
    config: ProtocolConfig,
    provider: &'a dyn TrustProvider,
    evidence: EvidenceBase,
    alphas: Vec<f64>,
    base_graphs: BTreeMap<StudentId, SubjectiveGraph>,
    shared_edges: Arc<crate::graph::EdgeMap>,
    class_pools: BTreeMap<ClassId, Vec<StudentId>>,
    state: SimulationState,
    output: SimulationOutput,
}

impl<'a> Simulation<'a> {
    pub fn new(
        cohort: &'a Cohort,
        scores: &'a ExamSeries,
        config: ProtocolConfig,
        provider: &'a dyn TrustProvider,
    ) -> Result<Self> {
        config.validate()?;
        scores.covers(cohort)?;
        if scores.epochs() < config.epochs {
            return Err(Error::Config(format!(
                "protocol wants {} epochs but scores cover {}",
                config.epochs,
                scores.epochs()
            )));
        }
        let range = cohort.anxiety_range();
        let alphas = cohort
            .students()
            .iter()
            .map(|s| alpha_from_anxiety(s.anxiety_raw, range))
            .collect::<Result<Vec<_>>>()?;
        let base_graphs = cohort
            .students()
            .iter()
            .filter(|s| cohort.is_social_observed(s.id))
            .map(|s| Ok((s.id, build_base_graph(s, cohort)?)))
            .collect::<Result<_>>()?;
        let class_pools = cohort
            .classes()
            .iter()
            .map(|(c, members)| (c.clone(), members.iter().map(|&i| cohort.students()[i].id).collect()))
            .collect();
        let state = SimulationState {
            beliefs: init_beliefs(cohort, &config),
            graphs: BTreeMap::new(),
            epoch: 0,
        };
        Ok(Self {
            cohort,
            scores,
            evidence: EvidenceBase::from_cohort(cohort),
            alphas,
            base_graphs,
            shared_edges: Arc::new(union_of_reported_ties(cohort)),
            class_pools,
            state,
            output: SimulationOutput::default(),
            config,
            provider,
        })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn evidence(&self) -> &EvidenceBase {
        &self.evidence
    }

    pub fn output(&self) -> &SimulationOutput {
        &self.output
    }

    fn alpha_of(&self, id: StudentId) -> f64 {
        self.alphas[self.cohort.index_of(id).expect("rostered")]
    }

    fn graphs_for_epoch(&self, epoch: usize) -> Result<BTreeMap<StudentId, SubjectiveGraph>> {
        let seed = self.config.seed;
        if self.config.ablations.no_subjective_graph {
            return self
                .base_graphs
                .keys()
                .map(|&id| {
                    Ok((
                        id,
                        SubjectiveGraph::shared(id, self.alpha_of(id), self.shared_edges.clone())?,
                    ))
                })
                .collect();
        }
        let draw_epoch = if self.config.reperturb_each_epoch { epoch } else { 1 };
        Ok(self
            .base_graphs
            .par_iter()
            .map(|(&id, base)| {
                let profile = NoiseProfile::for_owner(base, self.cohort);
                let class = &self.cohort.record(id).expect("rostered").class_id;
                let mut rng = StreamKey::new(Purpose::Perturb)
                    .epoch(draw_epoch)
                    .agent(id.0 as u64)
                    .stream(seed);
                (id, perturb_graph(base, &profile, &self.class_pools[class], &mut rng))
            })
            .collect())
    }

    /// Rebuilds subjective graphs, extends the evidence base and anchors
    /// self-beliefs for `epoch`. Returns the epoch's ground truth.
    pub fn begin_epoch(&mut self, epoch: usize) -> Result<LatentTruth> {
        let truth = latent_truth(self.scores, self.config.scale, self.cohort, epoch)?;
        let raw: Vec<f64> = self
            .cohort
            .ids()
            .map(|id| {
                self.scores
                    .score(id, epoch)
                    .ok_or(Error::MissingScore { student: id, epoch })
            })
            .collect::<Result<_>>()?;
        self.evidence.append_epoch(epoch, self.cohort, &raw, &truth.values)?;
        self.state.graphs = self.graphs_for_epoch(epoch)?;
        self.state.epoch = epoch;
        self.state.beliefs.epoch = epoch;
        self.anchor(epoch)?;
        self.output.traces.push(EpochTrace {
            epoch,
            unc_after_anchor: group_uncertainty(&self.state.beliefs),
            unc_after_round: Vec::new(),
        });
        Ok(truth)
    }

    /// Applies the self-score anchor for `epoch` to every rostered student.
    pub fn anchor(&mut self, epoch: usize) -> Result<()> {
        let abilities = ability_map(self.config.scale, self.scores, self.cohort, epoch)?;
        self.state.epoch = epoch;
        self_anchor(&mut self.state.beliefs, &abilities, self.config.sigma_self)
    }

    fn generate(&self, round: usize, order: &[StudentId]) -> Vec<(Message, usize)> {
        let epoch = self.state.epoch;
        let seed = self.config.seed;
        let snapshot = &self.state.beliefs;
        let eligible = self.cohort.social_observed();
        let mut out: Vec<(Message, usize)> = order
            .par_iter()
            .flat_map_iter(|&agent| {
                let g = &self.state.graphs[&agent];
                let key = StreamKey::new(Purpose::Partners)
                    .epoch(epoch)
                    .round(round)
                    .agent(agent.0 as u64);
                let partners = sample_partners(agent, g, self.config.max_partners, eligible, &mut key.stream(seed));
                let mut rng = StreamKey::new(Purpose::Compose)
                    .epoch(epoch)
                    .round(round)
                    .agent(agent.0 as u64)
                    .stream(seed);
                let alpha = self.alpha_of(agent);
                partners
                    .into_iter()
                    .enumerate()
                    .filter_map(|(idx, receiver)| {
                        compose_message(agent, receiver, snapshot, self.cohort, g, alpha, epoch, round, &mut rng)
                            .map(|m| (m, idx))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        out.sort_by_key(|(m, idx)| (m.sender, *idx));
        out
    }

    fn gather_evidence(&mut self, msg: &Message, partner_index: usize) -> Result<EvidenceBundle> {
        if self.config.ablations.no_rag {
            return Ok(EvidenceBundle::empty());
        }
        let g = self
            .state
            .graphs
            .get(&msg.receiver)
            .ok_or_else(|| Error::Config(format!("receiver {} has no subjective graph", msg.receiver)))?;
        let alpha = self.alpha_of(msg.receiver);
        let mut rng = StreamKey::new(Purpose::Retrieve)
            .epoch(msg.epoch)
            .round(msg.round)
            .agent(msg.sender.0 as u64)
            .extra(partner_index as u64)
            .stream(self.config.seed);
        let mut merged = EvidenceBundle::empty();
        for (target, purpose) in [
            (msg.sender, QueryPurpose::JudgeTrust),
            (msg.target, QueryPurpose::AssessAcademic),
        ] {
            let q = RetrievalQuery {
                retriever: msg.receiver,
                target,
                purpose,
                epoch: msg.epoch,
            };
            let bundle = retrieve(&q, &self.evidence, g, alpha, &mut rng)?;
            let ok = mechanism_leak_check(&bundle, g);
            debug_assert!(ok, "retrieval leaked outside the subjective graph");
            self.output.audit.retrievals += 1;
            self.output.audit.leak_check_failures += usize::from(!ok);
            self.output.audit.distractors += bundle.false_positives_applied;
            merged.omissions_applied += bundle.omissions_applied;
            merged.false_positives_applied += bundle.false_positives_applied;
            merged.records.extend(bundle.records);
        }
        Ok(merged)
    }

    fn sender_profile(&self, msg: &Message) -> SenderProfile {
        let receiver_graph = self.state.graphs.get(&msg.receiver);
        SenderProfile {
            class_id: self.cohort.record(msg.sender).expect("rostered").class_id.clone(),
            degree_in_receiver_graph: receiver_graph.map_or(0, |g| g.out_degree(msg.sender)),
            alpha_band: AlphaBand::of(self.alpha_of(msg.sender)),
            edge_pi: receiver_graph
                .and_then(|g| g.pi(msg.receiver, msg.sender))
                .unwrap_or(0.0),
        }
    }

    /// Runs one interaction round of the current epoch and returns its log.
    pub fn run_round(&mut self, round: usize) -> Result<Vec<RoundLogEntry>> {
        let order: Vec<StudentId> = self.cohort.social_observed().iter().copied().collect();
        self.run_round_in_order(round, &order)
    }

    /// As [`run_round`](Self::run_round) but generating messages in the
    /// given agent order. The result does not depend on that order.
    pub fn run_round_in_order(&mut self, round: usize, order: &[StudentId]) -> Result<Vec<RoundLogEntry>> {
        if self.state.epoch == 0 {
            return Err(Error::Config("run_round called before begin_epoch".into()));
        }
        let stub = StubTrust;
        let provider: &dyn TrustProvider = if self.config.ablations.no_llm_trust {
            &stub
        } else {
            self.provider
        };
        let messages = self.generate(round, order);
        let mut log = Vec::with_capacity(messages.len());
        for (msg, partner_index) in messages {
            let r = self.cohort.index_of(msg.receiver).expect("rostered");
            let t = self.cohort.index_of(msg.target).expect("rostered");
            let prior = self.state.beliefs.get(r, t);
            let evidence = self.gather_evidence(&msg, partner_index)?;
            let req = TrustRequest {
                sender: msg.sender,
                receiver: msg.receiver,
                target: msg.target,
                claim: msg.s_hat,
                claimed_uncertainty: msg.u_hat,
                receiver_prior: prior,
                evidence,
                sender_profile: self.sender_profile(&msg),
            };
            let wire_ok = audit_wire(&WireRequest::from_request(&req).to_value()).is_ok();
            self.output.audit.trust_requests += 1;
            self.output.audit.wire_violations += usize::from(!wire_ok);

            let resp = provider.assess(&req);
            *self.output.provider_tags.entry(resp.provider).or_default() += 1;
            let tau = precision_from(resp.omega, msg.u_hat, self.config.kappa)?;
            let post = fuse(prior, msg.s_hat, tau)?;
            self.state.beliefs.set(r, t, post);
            log.push(RoundLogEntry {
                epoch: msg.epoch,
                round: msg.round,
                sender: msg.sender,
                receiver: msg.receiver,
                target: msg.target,
                s_hat: msg.s_hat,
                u_hat: msg.u_hat,
                omega: resp.omega,
                tau,
                mu_before: prior.mu,
                sigma_before: prior.sigma,
                mu_after: post.mu,
                sigma_after: post.sigma,
            });
        }
        if let Some(trace) = self.output.traces.last_mut() {
            trace.unc_after_round.push(group_uncertainty(&self.state.beliefs));
        }
        self.output.round_log.extend_from_slice(&log);
        Ok(log)
    }

    /// Computes the epoch report and records the end-of-epoch snapshot.
    pub fn end_epoch(&mut self, truth: &LatentTruth) -> Result<EpochReport> {
        let beliefs = &self.state.beliefs;
        let report = evaluate(
            &aggregate_mean_belief(beliefs),
            truth,
            self.cohort,
            &self.config.acc_ks,
            Some(group_uncertainty(beliefs)),
            Some(class_diversity(&beliefs.mean_rows(), self.cohort)),
        )?;
        self.output.trajectory.push(beliefs.clone());
        self.output.reports.push(report.clone());
        Ok(report)
    }

    fn run_epoch(&mut self, epoch: usize) -> Result<()> {
        let truth = self.begin_epoch(epoch)?;
        for round in 1..=self.config.rounds_per_epoch {
            self.run_round(round)?;
        }
        self.end_epoch(&truth)?;
        Ok(())
    }

    /// Runs all epochs. On failure the error carries the epoch, and
    /// [`output`](Self::output) still holds every completed epoch.
    pub fn run(&mut self) -> Result<()> {
        for epoch in 1..=self.config.epochs {
            self.run_epoch(epoch).map_err(|e| Error::EpochFailed {
                epoch,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    pub fn into_output(self) -> SimulationOutput {
        self.output
    }
}

/// Partial output of a failed run, with the error that stopped it.
#[derive(Debug)]
pub struct FailedRun {
    pub partial: Box<SimulationOutput>,
    pub error: Error,
}

/// Full protocol over `config.epochs` epochs.
pub fn run_simulation(
    cohort: &Cohort,
    scores: &ExamSeries,
    config: &ProtocolConfig,
    provider: &dyn TrustProvider,
) -> std::result::Result<SimulationOutput, FailedRun> {
    let mut sim = match Simulation::new(cohort, scores, config.clone(), provider) {
        Ok(sim) => sim,
        Err(error) => {
            return Err(FailedRun {
                partial: Box::default(),
                error,
            })
        }
    };
    match sim.run() {
        Ok(()) => Ok(sim.into_output()),
        Err(error) => Err(FailedRun {
            partial: Box::new(sim.into_output()),
            error,
        }),
    }
}

/// Roster-ordered set of agents that send and receive messages.
pub fn active_agents(cohort: &Cohort) -> BTreeSet<StudentId> {
    cohort.social_observed().clone()
}
