//! Discrete-event simulation of the allocation system.
//!
//! Jobs arrive as a Poisson stream at the offered load and are routed
//! independently to server `i` with probability `p_i`. A job travels half of
//! the server's fixed two-way delay, queues FIFO at a single-server station,
//! is served, and travels the other half back. Its latency is the time from
//! send to receive.
//!
//! Service times are exponential (M/M/1), constant (M/D/1) or gamma-distributed
//! with the server's mean and coefficient of variation (M/G/1; constant when
//! `cv = 0`). Each replication is single-threaded and deterministic given the
//! seed; replications run in parallel and are aggregated in index order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::latency::{QueueModel, ServerSpec};
use crate::scenario::Scenario;
use crate::solver::{solve, AllocationKind};

/// Length of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Number of jobs sent.
    Jobs(u64),
    /// Simulated seconds during which jobs are sent.
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Offered load, jobs/second.
    pub load: f64,
    /// Routing probabilities, one per server in input order.
    pub p: Vec<f64>,
    pub horizon: Horizon,
    /// Leading fraction of the horizon excluded from statistics.
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
    /// Confidence level of the reported half-widths.
    pub confidence: f64,
    /// Keep per-job samples of the measured window.
    pub record_samples: bool,
}

impl SimulationConfig {
    pub const DEFAULT_JOBS: u64 = 200_000;

    /// Five replications of 200k jobs, 20% warmup, 95% confidence.
    pub fn new(load: f64, p: Vec<f64>) -> Self {
        Self {
            load,
            p,
            horizon: Horizon::Jobs(Self::DEFAULT_JOBS),
            warmup: 0.2,
            seed: 1,
            replications: 5,
            confidence: 0.95,
            record_samples: false,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.load > 0.0 && self.load.is_finite()) {
            return bad(format!("load must be positive, got {}", self.load));
        }
        if self.p.len() != n {
            return bad(format!(
                "{} routing probabilities for {n} servers",
                self.p.len()
            ));
        }
        if self.p.iter().any(|&x| !(x >= 0.0)) {
            return bad("routing probabilities must be non-negative".into());
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("routing probabilities sum to {total}, expected 1"));
        }
        match self.horizon {
            Horizon::Jobs(0) => return bad("horizon must contain at least one job".into()),
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                return bad(format!("time horizon must be positive, got {t}"))
            }
            _ => {}
        }
        if !(0.0..=0.5).contains(&self.warmup) {
            return bad(format!("warmup must lie in [0, 0.5], got {}", self.warmup));
        }
        if self.replications == 0 {
            return bad("at least one replication is required".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            ));
        }
        Ok(())
    }
}

/// Empirical statistics of one server, pooled over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerStats {
    /// Mean send-to-receive latency, seconds.
    pub mean_latency: f64,
    /// Mean time spent at the server (queue plus service), seconds.
    pub mean_sojourn: f64,
    pub utilization: f64,
    /// Measured arrival rate, jobs/second.
    pub arrival_rate: f64,
    pub completed: u64,
    /// Half-widths across replications; `None` with a single replication or
    /// when some replication saw no job at this server.
    pub latency_half_width: Option<f64>,
    pub sojourn_half_width: Option<f64>,
    pub utilization_half_width: Option<f64>,
    /// Standard error of the measured arrival rate across replications.
    pub arrival_rate_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean_latency: f64,
    pub mean_sojourn: f64,
    pub completed: u64,
    pub latency_half_width: Option<f64>,
}

/// One measured job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub job_id: u64,
    pub server: usize,
    /// Time the job left the server, seconds.
    pub depart_time: f64,
    /// Send-to-receive latency, seconds.
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub servers: Vec<ServerStats>,
    pub aggregate: AggregateStats,
    /// Some server was routed at least its capacity.
    pub overloaded: bool,
    pub replications: usize,
    pub confidence: f64,
    /// Per-replication samples, empty unless requested.
    #[serde(skip)]
    pub samples: Vec<Vec<Sample>>,
}

impl SimulationReport {
    /// Writes one replication's samples as CSV with header
    /// `job_id,server,depart_time,latency_s`.
    pub fn write_samples_csv<W: Write>(
        &self,
        replication: usize,
        mut out: W,
    ) -> std::io::Result<()> {
        writeln!(out, "job_id,server,depart_time,latency_s")?;
        if let Some(samples) = self.samples.get(replication) {
            for s in samples {
                writeln!(
                    out,
                    "{},{},{:?},{:?}",
                    s.job_id, s.server, s.depart_time, s.latency_s
                )?;
            }
        }
        Ok(())
    }
}

/// Runs the configured replications.
pub fn simulate(sc: &Scenario, cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate(sc.len())?;
    let services = sc
        .servers()
        .iter()
        .map(ServiceTime::for_server)
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(sc, cfg, &services, rep as u64))
        .collect();
    let overloaded = sc
        .servers()
        .iter()
        .zip(&cfg.p)
        .any(|(s, &p)| p * cfg.load >= s.mu());
    Ok(aggregate(outcomes, cfg, overloaded, sc.len()))
}

/// Analytic-versus-empirical comparison for one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub kind: AllocationKind,
    pub load: f64,
    pub p: Vec<f64>,
    /// Mean latency predicted by the solver, seconds.
    pub analytic: f64,
    /// Simulated mean latency, seconds.
    pub empirical: f64,
    pub half_width: Option<f64>,
    /// `(empirical - analytic) / analytic`.
    pub relative_gap: f64,
    /// The analytic value lies inside the empirical confidence interval.
    pub within_ci: bool,
    pub tolerance: f64,
    /// `|relative_gap| <= tolerance`.
    pub passed: bool,
}

/// Solves for `kind` at `load`, simulates the resulting routing and compares
/// the mean latencies. `sim.load` and `sim.p` are replaced by the solved ones.
pub fn validate(
    sc: &Scenario,
    load: f64,
    kind: AllocationKind,
    sim: &SimulationConfig,
    tolerance: f64,
) -> Result<Validation> {
    let alloc = solve(sc, load, kind)?;
    let mut cfg = sim.clone();
    cfg.load = load;
    // Routing needs an exact simplex point; the solver's sum is within 10 r.
    let total: f64 = alloc.p.iter().sum();
    cfg.p = alloc.p.iter().map(|x| x / total).collect();
    let report = simulate(sc, &cfg)?;
    let analytic = alloc.mean_latency;
    let empirical = report.aggregate.mean_latency;
    let half_width = report.aggregate.latency_half_width;
    let relative_gap = (empirical - analytic) / analytic;
    Ok(Validation {
        kind,
        load,
        p: alloc.p,
        analytic,
        empirical,
        half_width,
        relative_gap,
        within_ci: half_width.is_some_and(|h| (empirical - analytic).abs() <= h),
        tolerance,
        passed: relative_gap.abs() <= tolerance,
    })
}

#[derive(Debug, Clone)]
enum ServiceTime {
    Exponential(Exp<f64>),
    Constant(f64),
    Gamma(Gamma<f64>),
}

impl ServiceTime {
    fn for_server(s: &ServerSpec) -> Result<Self> {
        let mean = 1.0 / s.mu();
        let dist = match s.model() {
            QueueModel::MM1 => ServiceTime::Exponential(
                Exp::new(s.mu()).map_err(|e| Error::InvalidServer(e.to_string()))?,
            ),
            QueueModel::MD1 => ServiceTime::Constant(mean),
            QueueModel::MG1 if s.cv() == 0.0 => ServiceTime::Constant(mean),
            QueueModel::MG1 => {
                let c2 = s.cv() * s.cv();
                ServiceTime::Gamma(
                    Gamma::new(1.0 / c2, mean * c2)
                        .map_err(|e| Error::InvalidServer(e.to_string()))?,
                )
            }
            QueueModel::Generic => {
                return Err(Error::UnsupportedModel(
                    "generic latency models define no service-time distribution".into(),
                ))
            }
        };
        Ok(dist)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ServiceTime::Exponential(d) => d.sample(rng),
            ServiceTime::Constant(c) => *c,
            ServiceTime::Gamma(d) => d.sample(rng),
        }
    }
}

const STREAM_ARRIVALS: u64 = 0;
const STREAM_ROUTING: u64 = 1;
const STREAM_SERVICE: u64 = 2;

fn substream(seed: u64, replication: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * 4 + purpose);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Job {
    id: u64,
    server: usize,
    sent: f64,
    reached: f64,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Send,
    Reach(Job),
    Done(usize),
    Receive(Job, f64),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event; FIFO among equal times.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct EventList {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl EventList {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    count: u64,
    latency_sum: f64,
    sojourn_sum: f64,
    service_sum: f64,
}

struct RepOutcome {
    servers: Vec<Acc>,
    window: f64,
    samples: Vec<Sample>,
}

struct Station {
    queue: VecDeque<Job>,
    in_service: Option<Job>,
}

fn run_replication(
    sc: &Scenario,
    cfg: &SimulationConfig,
    services: &[ServiceTime],
    rep: u64,
) -> RepOutcome {
    let servers = sc.servers();
    let n = servers.len();
    let mut arrivals_rng = substream(cfg.seed, rep, STREAM_ARRIVALS);
    let mut routing_rng = substream(cfg.seed, rep, STREAM_ROUTING);
    let mut service_rng = substream(cfg.seed, rep, STREAM_SERVICE);
    let interarrival = Exp::new(cfg.load).expect("load validated positive");

    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in &cfg.p {
        acc += p;
        cumulative.push(acc);
    }
    let last_routable = cfg.p.iter().rposition(|&p| p > 0.0).unwrap_or(n - 1);
    let route = |u: f64| -> usize {
        cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last_routable)
            .min(last_routable)
    };
    let half_delay: Vec<f64> = servers.iter().map(|s| 0.5 * s.delay()).collect();

    let (warmup_jobs, warmup_time) = match cfg.horizon {
        Horizon::Jobs(total) => (
            (cfg.warmup * total as f64).floor() as u64,
            f64::NEG_INFINITY,
        ),
        Horizon::Time(t) => (0, cfg.warmup * t),
    };
    let measured = |job: &Job| job.id >= warmup_jobs && job.sent >= warmup_time;

    let mut stations: Vec<Station> = (0..n)
        .map(|_| Station {
            queue: VecDeque::new(),
            in_service: None,
        })
        .collect();
    let mut stats = vec![Acc::default(); n];
    let mut samples = Vec::new();
    let mut events = EventList::default();
    let mut next_id = 0u64;
    let mut window_start = None;
    let mut last_send = 0.0;

    events.push(interarrival.sample(&mut arrivals_rng), EventKind::Send);

    let mut start_service =
        |events: &mut EventList, stats: &mut [Acc], station: &mut Station, job: Job, now: f64| {
            let s = services[job.server].sample(&mut service_rng);
            if measured(&job) {
                stats[job.server].service_sum += s;
            }
            station.in_service = Some(job);
            events.push(now + s, EventKind::Done(job.server));
        };

    while let Some(ev) = events.pop() {
        let now = ev.time;
        match ev.kind {
            EventKind::Send => {
                let id = next_id;
                next_id += 1;
                let server = route(routing_rng.random::<f64>());
                let job = Job {
                    id,
                    server,
                    sent: now,
                    reached: f64::NAN,
                };
                if window_start.is_none() && measured(&job) {
                    window_start = Some(now);
                }
                last_send = now;
                events.push(now + half_delay[server], EventKind::Reach(job));
                let next = now + interarrival.sample(&mut arrivals_rng);
                let more = match cfg.horizon {
                    Horizon::Jobs(total) => next_id < total,
                    Horizon::Time(t) => next <= t,
                };
                if more {
                    events.push(next, EventKind::Send);
                }
            }
            EventKind::Reach(mut job) => {
                job.reached = now;
                let station = &mut stations[job.server];
                if station.in_service.is_none() {
                    start_service(&mut events, &mut stats, station, job, now);
                } else {
                    station.queue.push_back(job);
                }
            }
            EventKind::Done(server) => {
                let station = &mut stations[server];
                let job = station
                    .in_service
                    .take()
                    .expect("completion of an idle server");
                events.push(now + half_delay[server], EventKind::Receive(job, now));
                if let Some(next) = station.queue.pop_front() {
                    start_service(&mut events, &mut stats, station, next, now);
                }
            }
            EventKind::Receive(job, done) => {
                if measured(&job) {
                    let latency = now - job.sent;
                    let a = &mut stats[job.server];
                    a.count += 1;
                    a.latency_sum += latency;
                    a.sojourn_sum += done - job.reached;
                    if cfg.record_samples {
                        samples.push(Sample {
                            job_id: job.id,
                            server: job.server,
                            depart_time: done,
                            latency_s: latency,
                        });
                    }
                }
            }
        }
    }

    let window = match cfg.horizon {
        Horizon::Jobs(_) => last_send - window_start.unwrap_or(last_send),
        Horizon::Time(t) => t - warmup_time,
    };
    if cfg.record_samples {
        samples.sort_by_key(|s| s.job_id);
    }
    RepOutcome {
        servers: stats,
        window,
        samples,
    }
}

struct Summary {
    half_width: Option<f64>,
    std_error: Option<f64>,
}

/// Mean and t-based half-width of per-replication values.
fn summarize(values: &[f64], confidence: f64) -> Summary {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 || values.iter().any(|v| !v.is_finite()) {
        return Summary {
            half_width: None,
            std_error: None,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let se = (var / k as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.5 + 0.5 * confidence);
    Summary {
        half_width: Some(t * se),
        std_error: Some(se),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn aggregate(
    outcomes: Vec<RepOutcome>,
    cfg: &SimulationConfig,
    overloaded: bool,
    n: usize,
) -> SimulationReport {
    let conf = cfg.confidence;
    let total_window: f64 = outcomes.iter().map(|o| o.window).sum();
    let servers = (0..n)
        .map(|i| {
            let pooled = outcomes.iter().fold(Acc::default(), |mut a, o| {
                let s = &o.servers[i];
                a.count += s.count;
                a.latency_sum += s.latency_sum;
                a.sojourn_sum += s.sojourn_sum;
                a.service_sum += s.service_sum;
                a
            });
            let per_rep = |f: &dyn Fn(&Acc, f64) -> f64| -> Vec<f64> {
                outcomes
                    .iter()
                    .map(|o| f(&o.servers[i], o.window))
                    .collect()
            };
            let lat = summarize(&per_rep(&|a, _| ratio(a.latency_sum, a.count as f64)), conf);
            let soj = summarize(&per_rep(&|a, _| ratio(a.sojourn_sum, a.count as f64)), conf);
            let util = summarize(&per_rep(&|a, w| ratio(a.service_sum, w)), conf);
            let rate = summarize(&per_rep(&|a, w| ratio(a.count as f64, w)), conf);
            ServerStats {
                mean_latency: ratio(pooled.latency_sum, pooled.count as f64),
                mean_sojourn: ratio(pooled.sojourn_sum, pooled.count as f64),
                utilization: ratio(pooled.service_sum, total_window),
                arrival_rate: ratio(pooled.count as f64, total_window),
                completed: pooled.count,
                latency_half_width: lat.half_width,
                sojourn_half_width: soj.half_width,
                utilization_half_width: util.half_width,
                arrival_rate_std_error: rate.std_error,
            }
        })
        .collect();

    let rep_latency: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let (sum, count) = o
                .servers
                .iter()
                .fold((0.0, 0u64), |(s, c), a| (s + a.latency_sum, c + a.count));
            ratio(sum, count as f64)
        })
        .collect();
    let (lat_sum, soj_sum, count) = outcomes
        .iter()
        .flat_map(|o| &o.servers)
        .fold((0.0, 0.0, 0u64), |(l, s, c), a| {
            (l + a.latency_sum, s + a.sojourn_sum, c + a.count)
        });
    let aggregate = AggregateStats {
        mean_latency: ratio(lat_sum, count as f64),
        mean_sojourn: ratio(soj_sum, count as f64),
        completed: count,
        latency_half_width: summarize(&rep_latency, conf).half_width,
    };
    SimulationReport {
        servers,
        aggregate,
        overloaded,
        replications: cfg.replications,
        confidence: conf,
        samples: outcomes.into_iter().map(|o| o.samples).collect(),
    }
}
