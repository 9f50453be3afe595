//! Parallel versions of the grid computations. Columns are independent, so
//! each rayon task owns its column and results are collected in order.

use rayon::prelude::*;

use delayform_core::ctcr::{all_curves, cell_centres, CrossingCounter, CtcrError, StabilityMap, DEFAULT_KERNEL_SAMPLES};
use delayform_core::quasipoly::Factor;
use delayform_core::spectral::{abscissa_column, AbscissaSurface, SpectralError};

/// Same map as [`StabilityMap::compute`], with `tau1` columns in parallel.
pub fn stability_map(factors: &[Factor], tau_max: f64, resolution: usize) -> Result<StabilityMap, CtcrError> {
    if resolution == 0 {
        return Err(CtcrError::BadResolution);
    }
    let counter = CrossingCounter::new(factors, tau_max)?;
    let centres = cell_centres(tau_max, resolution);
    let columns = centres
        .par_iter()
        .map(|&c| counter.column_counts(c, &centres))
        .collect::<Result<Vec<_>, _>>()?;
    let curves = all_curves(factors, tau_max, DEFAULT_KERNEL_SAMPLES)?;
    StabilityMap::assemble(&counter, resolution, columns, curves)
}

/// Abscissa surface with one task per `tau1` column.
pub fn abscissa_surface(factors: &[Factor], tau1: &[f64], tau2: &[f64]) -> Result<AbscissaSurface, SpectralError> {
    let columns = tau1
        .par_iter()
        .map(|&t1| abscissa_column(factors, t1, tau2))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AbscissaSurface { tau1: tau1.to_vec(), tau2: tau2.to_vec(), sigma: columns.concat() })
}

/// Runs independent jobs concurrently, preserving input order.
pub fn run_all<T: Sync, R: Send>(jobs: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    jobs.par_iter().map(f).collect()
}
