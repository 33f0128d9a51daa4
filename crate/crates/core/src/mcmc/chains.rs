use std::io::Write;
use std::path::{Path, PathBuf};

use super::McmcError;

/// Retained draws of every parameter for every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    names: Vec<String>,
    /// `draws[chain][param][iteration]`
    draws: Vec<Vec<Vec<f64>>>,
    /// Post-burn-in acceptance rate per chain for each Metropolis parameter.
    acceptance: Vec<Vec<(String, f64)>>,
}

impl ChainSet {
    pub fn new(
        names: Vec<String>,
        draws: Vec<Vec<Vec<f64>>>,
        acceptance: Vec<Vec<(String, f64)>>,
    ) -> Self {
        debug_assert!(draws.iter().all(|c| c.len() == names.len()));
        Self { names, draws, acceptance }
    }

    /// Builds a chain set from raw per-chain columns; used for externally
    /// produced draws.
    pub fn from_columns(names: Vec<String>, draws: Vec<Vec<Vec<f64>>>) -> Self {
        let acceptance = vec![Vec::new(); draws.len()];
        Self::new(names, draws, acceptance)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn draws(&self, chain: usize, param: usize) -> &[f64] {
        &self.draws[chain][param]
    }

    /// Per-chain draws of one parameter.
    pub fn param(&self, name: &str) -> Result<Vec<&[f64]>, McmcError> {
        let idx = self.index_of(name).ok_or_else(|| McmcError::UnknownParameter(name.into()))?;
        Ok(self.draws.iter().map(|c| c[idx].as_slice()).collect())
    }

    /// All chains of one parameter concatenated.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>, McmcError> {
        Ok(self.param(name)?.concat())
    }

    pub fn acceptance_rates(&self) -> &[Vec<(String, f64)>] {
        &self.acceptance
    }

    /// Mean acceptance rate across chains for a Metropolis parameter.
    pub fn mean_acceptance(&self, name: &str) -> Option<f64> {
        let rates: Vec<f64> = self
            .acceptance
            .iter()
            .filter_map(|c| c.iter().find(|(n, _)| n == name).map(|(_, r)| *r))
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    /// Appends a column computed elementwise from an existing one.
    pub fn add_derived(
        &mut self,
        name: &str,
        source: &str,
        f: impl Fn(f64) -> f64,
    ) -> Result<(), McmcError> {
        let src = self.index_of(source).ok_or_else(|| McmcError::UnknownParameter(source.into()))?;
        for chain in &mut self.draws {
            let col: Vec<f64> = chain[src].iter().map(|&x| f(x)).collect();
            chain.push(col);
        }
        self.names.push(name.to_string());
        Ok(())
    }

    /// Writes one chain as CSV: a header of parameter names, then one row
    /// per retained iteration.
    pub fn write_chain_csv<W: Write>(&self, chain: usize, out: W) -> Result<(), McmcError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| McmcError::Io(e.to_string());
        w.write_record(&self.names).map_err(io)?;
        let cols = &self.draws[chain];
        let mut row = Vec::with_capacity(cols.len());
        for it in 0..self.n_draws() {
            row.clear();
            row.extend(cols.iter().map(|c| c[it].to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| McmcError::Io(e.to_string()))
    }

    /// Writes `chain_<k>.csv` for every chain into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<Vec<PathBuf>, McmcError> {
        std::fs::create_dir_all(dir).map_err(|e| McmcError::Io(e.to_string()))?;
        let mut paths = Vec::new();
        for k in 0..self.n_chains() {
            let path = dir.join(format!("chain_{}.csv", k + 1));
            let file = std::fs::File::create(&path).map_err(|e| McmcError::Io(e.to_string()))?;
            self.write_chain_csv(k, std::io::BufWriter::new(file))?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Reads back a chain written by [`write_chain_csv`](Self::write_chain_csv).
    pub fn read_chain_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), McmcError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let io = |e: csv::Error| McmcError::Io(e.to_string());
        let names: Vec<String> = r.headers().map_err(io)?.iter().map(String::from).collect();
        let mut cols = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            for (c, v) in cols.iter_mut().zip(rec.iter()) {
                c.push(v.parse::<f64>().map_err(|e| McmcError::Io(e.to_string()))?);
            }
        }
        Ok((names, cols))
    }
}
