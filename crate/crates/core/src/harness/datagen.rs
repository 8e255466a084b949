//! Synthetic LASSO and matrix-completion instances, and MovieLens ratings.

use std::fs;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{seeded_rng, standard_normal_vector};
use crate::network::Topology;
use crate::objectives::{LassoAgentData, McAgentData, McLoss, Problem};

#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub problem: Problem,
    pub theta_true: DVector<f64>,
}

/// `A_i` standard normal, `θ_true` `s`-sparse with standard normal entries
/// on a uniform support, `y_i = A_i θ_true + z_i` with `z_i ~ N(0, σ² I)`.
pub fn gen_lasso_instance(n: usize, m: usize, d: usize, s: usize, sigma2: f64, seed: u64) -> Result<LassoInstance> {
    if s > d {
        return Err(Error::ContractViolation(format!(
            "support size {s} exceeds dimension {d}"
        )));
    }
    if n == 0 || m == 0 || d == 0 || !(sigma2 >= 0.0) {
        return Err(Error::ContractViolation("need positive n, m, d and sigma2 >= 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut theta_true = DVector::zeros(d);
    let mut support = index::sample(&mut rng, d, s).into_vec();
    support.sort_unstable();
    for k in support {
        theta_true[k] = rng.sample(StandardNormal);
    }
    let noise_sd = sigma2.sqrt();
    let agents = (0..n)
        .map(|_| {
            let a = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = standard_normal_vector(m, &mut rng) * noise_sd;
            let y = &a * &theta_true + z;
            LassoAgentData::new(a, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LassoInstance {
        problem: Problem::lasso(agents)?,
        theta_true,
    })
}

/// One observed matrix entry, 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McNoise {
    None,
    /// Each training entry is corrupted with probability `prob` by `N(0, var)`.
    Sparse {
        prob: f64,
        var: f64,
    },
}

#[derive(Debug, Clone)]
pub struct McInstance {
    pub problem: Problem,
    pub theta_true: DMatrix<f64>,
    pub train: Vec<Entry>,
    /// Held-out entries with their noiseless values.
    pub test: Vec<Entry>,
    /// Number of corrupted training entries.
    pub noise_hits: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn gen_mc_instance(
    n: usize,
    rows: usize,
    cols: usize,
    rank: usize,
    train_frac: f64,
    noise: McNoise,
    loss: McLoss,
    seed: u64,
) -> Result<McInstance> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::ContractViolation(format!(
            "rank {rank} not in [1, {}]",
            rows.min(cols)
        )));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::ContractViolation(format!(
            "train fraction {train_frac} not in (0, 1)"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut theta_true = DMatrix::zeros(rows, cols);
    for _ in 0..rank {
        let y = standard_normal_vector(rows, &mut rng);
        let x = standard_normal_vector(cols, &mut rng);
        theta_true += y * x.transpose();
    }
    theta_true /= rank as f64;

    let total = rows * cols;
    let n_train = (train_frac * total as f64).round() as usize;
    if n_train < n {
        return Err(Error::InsufficientData {
            found: n_train,
            required: n,
        });
    }
    if n_train == total {
        return Err(Error::EmptyTestSet);
    }
    let mut cells: Vec<usize> = (0..total).collect();
    cells.shuffle(&mut rng);
    let at = |c: usize| (c % rows, c / rows);

    let mut noise_hits = 0;
    let mut train = Vec::with_capacity(n_train);
    for &c in &cells[..n_train] {
        let (row, col) = at(c);
        let mut value = theta_true[(row, col)];
        if let McNoise::Sparse { prob, var } = noise {
            if rng.random::<f64>() < prob {
                let dist = Normal::new(0.0, var.sqrt())
                    .map_err(|e| Error::ContractViolation(format!("noise variance: {e}")))?;
                value += dist.sample(&mut rng);
                noise_hits += 1;
            }
        }
        train.push(Entry { row, col, value });
    }
    let test = cells[n_train..]
        .iter()
        .map(|&c| {
            let (row, col) = at(c);
            Entry {
                row,
                col,
                value: theta_true[(row, col)],
            }
        })
        .collect();
    let problem = mc_problem(rows, cols, &train, n, loss)?;
    Ok(McInstance {
        problem,
        theta_true,
        train,
        test,
        noise_hits,
    })
}

/// Splits `len` items into `n` contiguous blocks whose sizes differ by at
/// most one, larger blocks first.
pub fn partition_blocks(len: usize, n: usize) -> Vec<Range<usize>> {
    let base = len / n;
    let extra = len % n;
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Distributes the training entries over `n` agents in contiguous blocks.
pub fn mc_problem(rows: usize, cols: usize, train: &[Entry], n: usize, loss: McLoss) -> Result<Problem> {
    if train.len() < n {
        return Err(Error::InsufficientData {
            found: train.len(),
            required: n,
        });
    }
    let agents = partition_blocks(train.len(), n)
        .into_iter()
        .map(|r| {
            let block = &train[r];
            McAgentData::new(
                rows,
                cols,
                block.iter().map(|e| (e.row, e.col)).collect(),
                block.iter().map(|e| e.value).collect(),
                loss,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Problem::matrix_completion(rows, cols, agents)
}

/// Parses `user<TAB>item<TAB>rating<TAB>timestamp` lines with 1-based ids.
/// With a declared shape, ids beyond it are rejected.
pub fn parse_movielens(text: &str, shape: Option<(usize, usize)>) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let id = |s: &str, what: &str| -> Result<usize> {
            let v: usize = s.trim().parse().map_err(|_| err(format!("bad {what} id {s:?}")))?;
            if v == 0 {
                return Err(err(format!("{what} ids are 1-based, found 0")));
            }
            Ok(v - 1)
        };
        let row = id(fields[0], "user")?;
        let col = id(fields[1], "item")?;
        let value: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad rating {:?}", fields[2])))?;
        fields[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| err(format!("bad timestamp {:?}", fields[3])))?;
        if let Some((rows, cols)) = shape {
            if row >= rows || col >= cols {
                return Err(err(format!("id ({}, {}) outside {rows}x{cols}", row + 1, col + 1)));
            }
        }
        out.push(Entry { row, col, value });
    }
    Ok(out)
}

pub fn load_movielens(path: &Path, shape: Option<(usize, usize)>) -> Result<Vec<Entry>> {
    parse_movielens(&fs::read_to_string(path)?, shape)
}

/// Smallest shape containing every entry.
pub fn infer_shape(entries: &[Entry]) -> (usize, usize) {
    entries
        .iter()
        .fold((0, 0), |(r, c), e| (r.max(e.row + 1), c.max(e.col + 1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Entry>,
    pub test: Vec<Entry>,
}

/// Seeded shuffle, then the first `round(test_frac · len)` entries are held
/// out. Both halves keep the shuffled order.
pub fn split_entries(entries: &[Entry], test_frac: f64, seed: u64) -> Result<Split> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::ContractViolation(format!(
            "test fraction {test_frac} not in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_test = (test_frac * entries.len() as f64).round() as usize;
    if n_test == 0 {
        return Err(Error::EmptyTestSet);
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| entries[i]).collect();
    Ok(Split {
        test: pick(&order[..n_test]),
        train: pick(&order[n_test..]),
    })
}

fn entry_rows(entries: &[Entry], agent_of: impl Fn(usize) -> Option<usize>) -> String {
    let mut s = String::from("agent,row,col,value\n");
    for (i, e) in entries.iter().enumerate() {
        let agent = agent_of(i).map_or(String::new(), |a| a.to_string());
        s.push_str(&format!("{agent},{},{},{:e}\n", e.row, e.col, e.value));
    }
    s
}

/// Writes one `agent_<i>.csv` per agent (columns `y,a_0,…`), the ground
/// truth and the topology edge list.
pub fn write_lasso_instance(dir: &Path, inst: &LassoInstance, topology: &Topology) -> Result<()> {
    fs::create_dir_all(dir)?;
    let Problem::Lasso { agents } = &inst.problem else {
        return Err(Error::ContractViolation("not a LASSO instance".into()));
    };
    for (i, agent) in agents.iter().enumerate() {
        let mut w = csv::Writer::from_path(dir.join(format!("agent_{i}.csv"))).map_err(csv_err)?;
        let mut header = vec!["y".to_string()];
        header.extend((0..agent.a.ncols()).map(|k| format!("a_{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..agent.a.nrows() {
            let mut row = vec![format!("{:e}", agent.y[r])];
            row.extend(agent.a.row(r).iter().map(|v| format!("{v:e}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let truth: String = inst.theta_true.iter().map(|v| format!("{v:e}\n")).collect();
    fs::write(dir.join("theta_true.csv"), format!("theta\n{truth}"))?;
    fs::write(dir.join("network.edges"), topology.to_edge_list())?;
    Ok(())
}

/// Writes `train.csv` (with the owning agent), `test.csv`, the dense ground
/// truth and the topology edge list.
pub fn write_mc_instance(dir: &Path, inst: &McInstance, n_agents: usize, topology: &Topology) -> Result<()> {
    fs::create_dir_all(dir)?;
    let blocks = partition_blocks(inst.train.len(), n_agents);
    let owner = |i: usize| blocks.iter().position(|r| r.contains(&i));
    fs::write(dir.join("train.csv"), entry_rows(&inst.train, owner))?;
    fs::write(dir.join("test.csv"), entry_rows(&inst.test, |_| None))?;
    let mut truth = String::new();
    for r in 0..inst.theta_true.nrows() {
        let row: Vec<String> = inst.theta_true.row(r).iter().map(|v| format!("{v:e}")).collect();
        truth.push_str(&row.join(","));
        truth.push('\n');
    }
    fs::write(dir.join("theta_true.csv"), truth)?;
    fs::write(dir.join("network.edges"), topology.to_edge_list())?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
