use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchError, Objective, Result};
use crate::corpus::{split_events, InteractionLog, SplitPlan};
use crate::metrics::{ndcg_at_k, recall_at_k, EvalContext};
use crate::models::{
    recommend_for_user, train_content, train_mf, train_vaecf, AnyModel, HyperParams, ItemFeatures, ModelError,
    ModelFamily, RankedList, Recommender, TrainData,
};
use crate::rng::derive_seed;

/// Share of the training events held out for model selection.
pub const VALIDATION_RATIO: f64 = 0.1;

/// Candidate values per hyper-parameter, in declaration order.
pub type GridSpec = IndexMap<String, Vec<f64>>;

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Position in enumeration order.
    pub id: usize,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    /// Objective value; absent when the trial failed or had no validation users.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestHyper {
    pub params: Vec<(String, f64)>,
    pub hyper: HyperParams,
    pub objective: Objective,
    pub score: f64,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub trials: Vec<Trial>,
}

/// Everything a trial needs; shared read-only by all workers.
pub struct HpoProblem<'a> {
    pub log: &'a InteractionLog,
    /// `train` is fitted on, `test` is the validation fold.
    pub validation: &'a SplitPlan,
    pub family: ModelFamily,
    pub features: Option<&'a ItemFeatures>,
    pub base: HyperParams,
    pub master_seed: u64,
    pub objective: Objective,
}

/// Cartesian product of the grid, the last key varying fastest.
pub fn enumerate_grid(grid: &GridSpec) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((name.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

/// Seed of a trial: a stable hash of the master seed and the parameter
/// assignment, independent of scheduling.
pub fn trial_seed(master: u64, params: &[(String, f64)]) -> u64 {
    let label: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
    derive_seed(master, &format!("trial:{}", label.join(",")))
}

/// Carves the validation fold out of `plan.train` with the plan's strategy.
pub fn validation_plan(log: &InteractionLog, plan: &SplitPlan, seed: u64) -> Result<SplitPlan> {
    let (train, test) = split_events(log, &plan.train, plan.strategy, VALIDATION_RATIO, derive_seed(seed, "validation"))?;
    Ok(SplitPlan {
        train,
        test,
        strategy: plan.strategy,
        test_ratio: VALIDATION_RATIO,
        seed,
        cold_items: Default::default(),
    })
}

pub fn train_model(
    family: ModelFamily,
    data: &TrainData,
    features: Option<&ItemFeatures>,
    hp: &HyperParams,
) -> Result<AnyModel> {
    Ok(match family {
        ModelFamily::Mf => AnyModel::Mf(train_mf(data, hp)?),
        ModelFamily::Vaecf => AnyModel::Vaecf(train_vaecf(data, hp)?),
        content => {
            let variant = content.content_variant().expect("content family");
            let f = features.ok_or_else(|| ModelError::Precondition(format!("{family} needs item features")))?;
            AnyModel::Content(train_content(data, f, variant, hp)?)
        }
    })
}

/// Top-`k` lists for the users that have held-out events in `plan.test`,
/// excluding each user's training items.
pub(crate) fn rank_test_users(
    model: &dyn Recommender,
    log: &InteractionLog,
    plan: &SplitPlan,
    k: usize,
) -> Result<Vec<RankedList>> {
    let history = plan.train_items_by_user(log);
    let relevant = plan.test_items_by_user(log);
    let popularity = plan.train_popularity(log);
    let users: Vec<usize> = (0..log.n_users()).filter(|&u| !relevant[u].is_empty()).collect();
    users
        .iter()
        .map(|&u| Ok(recommend_for_user(model, u, k, &history[u], &popularity)?))
        .collect()
}

fn run_trial(problem: &HpoProblem<'_>, data: &TrainData, id: usize, params: &[(String, f64)]) -> Trial {
    let seed = trial_seed(problem.master_seed, params);
    let mut trial = Trial {
        id,
        params: params.to_vec(),
        seed,
        recall: None,
        ndcg: None,
        score: None,
        error: None,
    };
    let outcome = (|| -> Result<(Option<f64>, Option<f64>)> {
        let mut hp = problem.base.clone();
        for (name, v) in params {
            hp.set(name, *v)?;
        }
        hp.seed = seed;
        let model = train_model(problem.family, data, problem.features, &hp)?;
        let k = problem.objective.k();
        let lists = rank_test_users(&model, problem.log, problem.validation, k)?;
        let ctx = EvalContext {
            k,
            catalog_size: problem.log.n_items(),
            relevant: problem.validation.test_items_by_user(problem.log),
            ..EvalContext::default()
        };
        Ok((recall_at_k(&lists, &ctx)?.value, ndcg_at_k(&lists, &ctx)?.value))
    })();
    match outcome {
        Ok((recall, ndcg)) => {
            trial.recall = recall;
            trial.ndcg = ndcg;
            trial.score = match problem.objective {
                Objective::Ndcg(_) => ndcg,
                Objective::Recall(_) => recall,
            };
        }
        Err(e) => trial.error = Some(e.to_string()),
    }
    trial
}

/// Trains one model per grid point on the validation plan's train events
/// and keeps the best by the objective; ties go to the earliest point.
pub fn grid_search(problem: &HpoProblem<'_>, grid: &GridSpec, workers: usize) -> Result<BestHyper> {
    let points = enumerate_grid(grid);
    if points.is_empty() || grid.is_empty() {
        return Err(BenchError::Config("grid is empty".into()));
    }
    let data = TrainData::from_events(problem.log, &problem.validation.train);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {workers} workers: {e}")))?;
    let trials: Vec<Trial> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(id, p)| run_trial(problem, &data, id, p))
            .collect()
    });
    for t in &trials {
        match &t.error {
            Some(e) => log::warn!("trial {} {:?} failed: {e}", t.id, t.params),
            None => log::info!("trial {} {:?}: recall {:?} ndcg {:?}", t.id, t.params, t.recall, t.ndcg),
        }
    }
    let best = trials
        .iter()
        .filter_map(|t| t.score.map(|s| (t, s)))
        .fold(None::<(&Trial, f64)>, |acc, (t, s)| match acc {
            Some((_, b)) if s <= b => acc,
            _ => Some((t, s)),
        });
    let Some((best, score)) = best else {
        return Err(BenchError::NoViableTrial { trials });
    };
    let mut hyper = problem.base.clone();
    for (name, v) in &best.params {
        hyper.set(name, *v)?;
    }
    hyper.seed = problem.base.seed;
    Ok(BestHyper {
        params: best.params.clone(),
        hyper,
        objective: problem.objective,
        score,
        recall: best.recall,
        ndcg: best.ndcg,
        trials: trials.clone(),
    })
}
