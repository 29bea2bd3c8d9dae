//! The `compare` subcommand: tabulates two or more summary.json files of
//! the same problem and their pairwise Gaussian gaps.

use std::path::{Path, PathBuf};

use uki_core::gaussian::gaussian_kl;

use crate::run::Summary;

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("need at least 2 summaries, got {0}")]
    TooFew(usize),
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("mismatched problems: '{first}' vs '{other}' in {path}")]
    MismatchedProblems {
        first: String,
        other: String,
        path: String,
    },
}

fn load(path: &Path) -> Result<Summary, CompareError> {
    let text = std::fs::read_to_string(path).map_err(|e| CompareError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CompareError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn format_vec(values: &[f64]) -> String {
    let entries: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", entries.join(", "))
}

pub fn compare(paths: &[PathBuf]) -> Result<String, CompareError> {
    if paths.len() < 2 {
        return Err(CompareError::TooFew(paths.len()));
    }
    let mut summaries = Vec::with_capacity(paths.len());
    for path in paths {
        summaries.push((path, load(path)?));
    }
    let first_problem = summaries[0].1.problem.clone();
    for (path, summary) in &summaries {
        if summary.problem != first_problem {
            return Err(CompareError::MismatchedProblems {
                first: first_problem,
                other: summary.problem.clone(),
                path: path.display().to_string(),
            });
        }
    }

    let mut out = String::new();
    out.push_str(&format!("problem: {first_problem}\n\n"));
    out.push_str("run  algorithm/policy      mean                          std\n");
    for (idx, (path, summary)) in summaries.iter().enumerate() {
        let belief = summary.final_belief().map_err(|e| CompareError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let std: Vec<f64> = belief
            .covariance
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        out.push_str(&format!(
            "{idx:<4} {:<21} {:<29} {}\n",
            format!("{}/{}", summary.algorithm, summary.omega_policy),
            format_vec(&summary.final_mean),
            format_vec(&std),
        ));
    }

    out.push_str("\npair  kl(p||q)       kl(q||p)       cov frobenius gap\n");
    for i in 0..summaries.len() {
        for j in (i + 1)..summaries.len() {
            let p = summaries[i].1.final_belief().unwrap();
            let q = summaries[j].1.final_belief().unwrap();
            let kl_pq = gaussian_kl(&p, &q).unwrap_or(f64::NAN);
            let kl_qp = gaussian_kl(&q, &p).unwrap_or(f64::NAN);
            let frob = (&p.covariance - &q.covariance).norm();
            out.push_str(&format!(
                "{i}-{j}   {kl_pq:<14.6e} {kl_qp:<14.6e} {frob:.6e}\n"
            ));
        }
    }
    Ok(out)
}
