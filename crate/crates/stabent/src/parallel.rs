use rayon::prelude::*;
use stabent_core::exec::Executor;

/// Order-preserving executor on a private rayon pool; one job runs inline.
pub struct Pool {
    pool: Option<rayon::ThreadPool>,
}

impl Pool {
    pub fn new(jobs: usize) -> anyhow::Result<Self> {
        if jobs <= 1 {
            return Ok(Self { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        Ok(Self { pool: Some(pool) })
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(p) => p.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
